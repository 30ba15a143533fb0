//! Error types shared across the crate.
//!
//! Every failure mode is structured enough for a caller to act on it:
//! invalid input carries one entry per violation (JSON-pointer style paths),
//! numerical failures carry the offending spectral node, and pole proximity
//! is distinguished from generic numerical trouble because the fix differs
//! (move the contour vs. refine the discretisation).

use num_complex::Complex64;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// One entry per violation, each prefixed with a JSON-pointer-like path
    /// (e.g. `/domain/sigmas/1: must be positive`).
    #[error("invalid input:\n{}", .0.join("\n"))]
    InvalidInput(Vec<String>),

    /// A spectral quantity left the representable range before any row
    /// scaling could be applied. Reported, never silently saturated.
    #[error("overflow in {context} at k = {kappa} (exponent {exponent:.1})")]
    Overflow {
        context: String,
        kappa: Complex64,
        exponent: f64,
    },

    /// LU hit a pivot below the singularity threshold: the contour passes
    /// too close to a zero of det A(kappa).
    #[error("system is numerically singular at kappa = {kappa} (pivot {pivot:.3e}); the contour passes too close to a zero of det A")]
    SingularNode { kappa: Complex64, pivot: f64 },

    /// Solve succeeded but the residual check failed.
    #[error("solve residual {residual:.3e} exceeds 1e-8 at kappa = {kappa}")]
    ResidualTooLarge { kappa: Complex64, residual: f64 },

    /// Minimum |det| over the contour stayed at or below threshold even
    /// after radius adaptation, or a closed-form denominator vanished.
    #[error("pole proximity: {detail} (|den| = {min_abs:.3e} at kappa = {kappa})")]
    PoleProximity {
        kappa: Complex64,
        min_abs: f64,
        detail: String,
    },

    /// The finite-difference run left the stability envelope.
    #[error("finite-difference solution became unstable at step {step} (max |u| = {max_abs:.3e})")]
    UnstableFd { step: usize, max_abs: f64 },

    /// Adaptive quadrature exhausted its subdivision budget.
    #[error("quadrature tolerance not met: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureTolerance { achieved: f64, requested: f64 },

    /// A request outside the supported problem class.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A batch evaluation failed at one of its time points; wraps the
    /// underlying failure with the offending index so callers can report
    /// which entry of the time grid broke.
    #[error("at times[{index}] (t = {t}): {source}")]
    TimeStep {
        index: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code class for the CLI: config errors 2, numerical
    /// errors 3, pole proximity 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Unsupported(_) | Error::UnstableFd { .. } => 2,
            Error::PoleProximity { .. } | Error::SingularNode { .. } => 4,
            Error::TimeStep { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
