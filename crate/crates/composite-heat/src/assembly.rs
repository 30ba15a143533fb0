//! Per-node linear systems coupling the interface unknowns.
//!
//! At each spectral node `kappa` the interface unknowns
//! `X = (g0^(1..n), g1^(1..n))` (whole line) or
//! `X^F = (g0^(0..n+1), g1^(0..n+1))` (finite interval) satisfy a small
//! dense system `A(kappa) X = Y(kappa)` built from the layer-wise global
//! relations: for layer `j` with scaled variable `k = kappa / sigma_j`,
//!
//! ```text
//! +kappa:  (i kappa / s_j) e^{-i kappa x_j / s_j} g0_j + e^{-i kappa x_j / s_j} g1_j
//!        - (i kappa / s_j) e^{-i kappa x_{j-1} / s_j} g0_{j-1}
//!        - (s_{j-1}^2 / s_j^2) e^{-i kappa x_{j-1} / s_j} g1_{j-1}
//!        = -u0_hat^{(j)}(+kappa / s_j) / s_j^2
//! ```
//!
//! and the mirrored `-kappa` relation with `e^{+i kappa x / s_j}` kernels
//! and transform argument `-kappa / s_j`. Unbounded layers drop the term at
//! their missing endpoint; the finite case adds one Robin row per boundary
//! and uses the convention `sigma_0 = sigma_1` so the left boundary
//! derivative unknown is layer 1's own.
//!
//! Everything is stored *tilted* (right-hand sides carry `e^{-kappa^2 t}`)
//! and *row-prescaled*: each relation is divided analytically by the modulus
//! of its largest kernel, so no stored entry exceeds 1 in magnitude no
//! matter how far up the contour the node sits. Row scaling leaves the
//! solution untouched; the applied factors are kept (in log form) so the raw
//! determinant remains recoverable.

use num_complex::Complex64;

use crate::domain::{CompositeDomain, DomainKind, InitialData, RobinBoundary};
use crate::error::{Error, Result};
use crate::linalg::{lu_factor, CMatrix};
use crate::transforms::{layer_transform_scaled, scaled_time_transform, SpectralPoint};

/// Which map a system belongs to, with its interface count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Whole line, `n` interfaces: dimension `2n`.
    Infinite(usize),
    /// Interval, `n` interior interfaces: dimension `2(n+2)`.
    Finite(usize),
}

impl SystemKind {
    pub fn dimension(&self) -> usize {
        match *self {
            SystemKind::Infinite(n) => 2 * n,
            SystemKind::Finite(n) => 2 * (n + 2),
        }
    }

    /// Number of `(g0, g1)` pairs carried by the solution vector.
    pub fn pair_count(&self) -> usize {
        self.dimension() / 2
    }
}

/// One assembled node system: `matrix * X = rhs`, already tilted and
/// row-prescaled.
#[derive(Debug, Clone)]
pub struct SpectralSystem {
    pub matrix: CMatrix,
    pub rhs: Vec<Complex64>,
    pub node: SpectralPoint,
    pub kind: SystemKind,
    /// Log of the positive factor each row of the *raw* system was divided
    /// by (analytic prescale plus any later equilibration). Stored as logs
    /// so `sum` recovers `log |det raw| - log |det matrix|` without overflow.
    pub row_scales: Vec<f64>,
}

/// Solution of one node system.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Tilted interface values `g0`, one per unknown pair (finite systems
    /// include the two boundary points, index 0 and last).
    pub g0: Vec<Complex64>,
    /// Tilted interface derivatives `g1`, same layout.
    pub g1: Vec<Complex64>,
    /// `max_i |A x - b|_i` of the equilibrated system.
    pub residual_norm: f64,
}

/// Pivot-magnitude threshold (relative to the equilibrated scale) below
/// which a node is treated as sitting on a zero of `det A`.
pub const SINGULAR_THRESHOLD: f64 = 1e-14;

/// Residual threshold for accepting a node solve.
pub const RESIDUAL_THRESHOLD: f64 = 1e-8;

/// Assemble the whole-line system at one node.
///
/// Expects the normalized frame (`x_1 = 0`); `Im kappa > 0` is required for
/// the prescaling exponents to damp rather than grow.
pub fn build_infinite(
    domain: &CompositeDomain,
    u0: &InitialData,
    node: SpectralPoint,
    t: f64,
) -> Result<SpectralSystem> {
    debug_assert_eq!(domain.kind, DomainKind::Infinite);
    debug_assert!(node.kappa.im > 0.0, "node must lie in the upper half-plane");
    let n = domain.interface_count();
    let bps = &domain.breakpoints;
    let sig = &domain.sigmas;
    let dim = 2 * n;
    let mut matrix = CMatrix::zeros(dim);
    let mut rhs = vec![Complex64::new(0.0, 0.0); dim];
    let mut row_scales = vec![0.0_f64; dim];
    let kappa = node.kappa;
    let i_kappa = Complex64::i() * kappa;
    let tilt = tilt_factor(node, t)?;

    // +kappa relations, layers j = 1..n (each bounded on the right).
    for j in 1..=n {
        let s = sig[j - 1];
        let row = j - 1;
        let xj = bps[j - 1];
        // Kernel moduli peak at the right endpoint x_j; divide the row by
        // e^{Im kappa * x_j / s} (x_j >= 0 in the normalized frame).
        let m_row = kappa.im * xj / s;
        row_scales[row] = m_row;
        let ej = (-i_kappa * xj / s - m_row).exp();
        matrix.set(row, j - 1, i_kappa / s * ej);
        matrix.set(row, n + j - 1, ej);
        if j >= 2 {
            let xjm = bps[j - 2];
            let ejm = (-i_kappa * xjm / s - m_row).exp();
            matrix.set(row, j - 2, -i_kappa / s * ejm);
            matrix.set(row, n + j - 2, -(sig[j - 2] / s).powi(2) * ejm);
        }
        rhs[row] = -tilt * layer_transform_scaled(u0, j, kappa / s, m_row)? / (s * s);
    }

    // -kappa relations, layers j = 2..n+1 (each bounded on the left).
    for j in 2..=n + 1 {
        let s = sig[j - 1];
        let row = n + j - 2;
        let xjm = bps[j - 2];
        // Kernel moduli peak at the left endpoint x_{j-1}.
        let m_row = -kappa.im * xjm / s;
        row_scales[row] = m_row;
        let ejm = (i_kappa * xjm / s - m_row).exp();
        matrix.set(row, j - 2, i_kappa / s * ejm);
        matrix.set(row, n + j - 2, -(sig[j - 2] / s).powi(2) * ejm);
        if j <= n {
            let xj = bps[j - 1];
            let ej = (i_kappa * xj / s - m_row).exp();
            matrix.set(row, j - 1, -i_kappa / s * ej);
            matrix.set(row, n + j - 1, ej);
        }
        rhs[row] = -tilt * layer_transform_scaled(u0, j, -kappa / s, m_row)? / (s * s);
    }

    check_finite(&matrix, &rhs, kappa)?;
    Ok(SpectralSystem {
        matrix,
        rhs,
        node,
        kind: SystemKind::Infinite(n),
        row_scales,
    })
}

/// Assemble the finite-interval system at one node.
///
/// Row layout: Robin at `x_0`; the `n+1` `+kappa` relations; the `n+1`
/// `-kappa` relations; Robin at `x_{n+1}`. Column layout: `g0^(0..n+1)`
/// then `g1^(0..n+1)`, where `g1^(j)` is the derivative at `x_j` taken in
/// the layer left of `x_j` (layer 1 for `j = 0`, per `sigma_0 = sigma_1`).
pub fn build_finite(
    domain: &CompositeDomain,
    u0: &InitialData,
    bc: &RobinBoundary,
    node: SpectralPoint,
    t: f64,
) -> Result<SpectralSystem> {
    debug_assert_eq!(domain.kind, DomainKind::Finite);
    debug_assert!(node.kappa.im > 0.0, "node must lie in the upper half-plane");
    let n = domain.interface_count();
    let nl = n + 1; // layers
    let bps = &domain.breakpoints; // x_0..x_{n+1}
    let sig = &domain.sigmas;
    let dim = 2 * (n + 2);
    let g1_base = n + 2;
    let mut matrix = CMatrix::zeros(dim);
    let mut rhs = vec![Complex64::new(0.0, 0.0); dim];
    let mut row_scales = vec![0.0_f64; dim];
    let kappa = node.kappa;
    let i_kappa = Complex64::i() * kappa;
    let tilt = tilt_factor(node, t)?;

    // Robin condition at x_0 (already tilted: scaled_time_transform carries
    // the e^{-kappa^2 t} factor).
    matrix.set(0, 0, bc.beta[0].into());
    matrix.set(0, g1_base, bc.beta[1].into());
    rhs[0] = scaled_time_transform(&bc.f_left, kappa, t)?;

    // +kappa and -kappa relations for layers j = 1..n+1. sigma_0 = sigma_1
    // makes the j = 1 left-endpoint derivative coefficient come out as 1.
    for j in 1..=nl {
        let s = sig[j - 1];
        let s_prev = if j >= 2 { sig[j - 2] } else { sig[0] };
        let (xjm, xj) = (bps[j - 1], bps[j]);

        let row = j;
        let m_row = kappa.im * xj / s;
        row_scales[row] = m_row;
        let ej = (-i_kappa * xj / s - m_row).exp();
        let ejm = (-i_kappa * xjm / s - m_row).exp();
        matrix.set(row, j, i_kappa / s * ej);
        matrix.set(row, g1_base + j, ej);
        matrix.set(row, j - 1, -i_kappa / s * ejm);
        matrix.set(row, g1_base + j - 1, -(s_prev / s).powi(2) * ejm);
        rhs[row] = -tilt * layer_transform_scaled(u0, j, kappa / s, m_row)? / (s * s);

        let row = nl + j;
        let m_row = -kappa.im * xjm / s;
        row_scales[row] = m_row;
        let ej = (i_kappa * xj / s - m_row).exp();
        let ejm = (i_kappa * xjm / s - m_row).exp();
        matrix.set(row, j, -i_kappa / s * ej);
        matrix.set(row, g1_base + j, ej);
        matrix.set(row, j - 1, i_kappa / s * ejm);
        matrix.set(row, g1_base + j - 1, -(s_prev / s).powi(2) * ejm);
        rhs[row] = -tilt * layer_transform_scaled(u0, j, -kappa / s, m_row)? / (s * s);
    }

    // Robin condition at x_{n+1}.
    matrix.set(dim - 1, n + 1, bc.beta[2].into());
    matrix.set(dim - 1, g1_base + n + 1, bc.beta[3].into());
    rhs[dim - 1] = scaled_time_transform(&bc.f_right, kappa, t)?;

    check_finite(&matrix, &rhs, kappa)?;
    Ok(SpectralSystem {
        matrix,
        rhs,
        node,
        kind: SystemKind::Finite(n),
        row_scales,
    })
}

/// `e^{-kappa^2 t}` with an explicit overflow report: on arc nodes
/// `Re(kappa^2)` can be negative, and a contour radius grossly inconsistent
/// with `t` would otherwise saturate silently.
fn tilt_factor(node: SpectralPoint, t: f64) -> Result<Complex64> {
    let exponent = -node.kappa_sq * t;
    if exponent.re > 700.0 {
        return Err(Error::Overflow {
            context: "tilt e^{-kappa^2 t}".into(),
            kappa: node.kappa,
            exponent: exponent.re,
        });
    }
    Ok(exponent.exp())
}

fn check_finite(matrix: &CMatrix, rhs: &[Complex64], kappa: Complex64) -> Result<()> {
    for i in 0..matrix.n {
        let bad_row = matrix.row(i).iter().any(|z| !z.re.is_finite() || !z.im.is_finite());
        if bad_row || !rhs[i].re.is_finite() || !rhs[i].im.is_finite() {
            return Err(Error::Overflow {
                context: format!("assembled row {i}"),
                kappa,
                exponent: f64::INFINITY,
            });
        }
    }
    Ok(())
}

/// Divide every row of `[matrix | rhs]` by its largest matrix-entry modulus.
///
/// Row scaling never changes the solution; it normalizes the determinant so
/// threshold comparisons (singularity, pole proximity) are scale-free.
pub fn equilibrate(system: &mut SpectralSystem) -> Result<()> {
    let n = system.matrix.n;
    for i in 0..n {
        let m = system
            .matrix
            .row(i)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if m == 0.0 {
            return Err(Error::SingularNode {
                kappa: system.node.kappa,
                pivot: 0.0,
            });
        }
        let inv = 1.0 / m;
        for v in system.matrix.row_mut(i) {
            *v *= inv;
        }
        system.rhs[i] *= inv;
        system.row_scales[i] += m.ln();
    }
    Ok(())
}

/// Solve one (equilibrated) node system and split the solution into its
/// `g0`/`g1` halves.
pub fn solve_node(system: &SpectralSystem) -> Result<SolveResult> {
    let kappa = system.node.kappa;
    let factors = lu_factor(&system.matrix, kappa)?;

    // With rows equilibrated to unit max-entry, a tiny pivot means the
    // contour grazes a zero of det A: report it as such so the caller can
    // enlarge R rather than trust a wild solution.
    let scale = system.matrix.max_abs();
    let min_pivot = factors.min_pivot();
    if min_pivot <= SINGULAR_THRESHOLD * scale {
        return Err(Error::PoleProximity {
            kappa,
            min_abs: min_pivot,
            detail: "contour too close to a zero of det A; enlarge R".into(),
        });
    }

    let x = factors.solve(&system.rhs);
    let ax = system.matrix.matvec(&x);
    let mut residual_norm: f64 = 0.0;
    for (axi, bi) in ax.iter().zip(&system.rhs) {
        residual_norm = residual_norm.max((axi - bi).norm());
    }
    let rhs_norm = system.rhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let x_norm = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual_norm > RESIDUAL_THRESHOLD * (scale * x_norm).max(rhs_norm).max(1e-300) {
        return Err(Error::ResidualTooLarge {
            kappa,
            residual: residual_norm,
        });
    }

    let pairs = system.kind.pair_count();
    Ok(SolveResult {
        g0: x[..pairs].to_vec(),
        g1: x[pairs..].to_vec(),
        residual_norm,
    })
}

/// Scan `|det|` of the equilibrated system over a set of nodes; returns the
/// minimum and the node attaining it. Drives the pole-avoidance loop.
///
/// The matrix depends only on the domain geometry (and, for the finite
/// case, the Robin coefficients) — not on data or time — so the scan builds
/// with zero data at t = 0 (unit tilt, valid for arbitrarily large radii).
pub fn det_scan(
    domain: &CompositeDomain,
    bc: Option<&RobinBoundary>,
    nodes: &[SpectralPoint],
) -> Result<(f64, Complex64)> {
    let u0 = InitialData::zero(domain.layer_count());
    let mut min_det = f64::INFINITY;
    let mut at = Complex64::new(0.0, 0.0);
    for &node in nodes {
        let mut system = match domain.kind {
            DomainKind::Infinite => build_infinite(domain, &u0, node, 0.0)?,
            DomainKind::Finite => {
                let bc = bc.ok_or_else(|| {
                    Error::Unsupported("finite domain det scan requires boundary data".into())
                })?;
                build_finite(domain, &u0, bc, node, 0.0)?
            }
        };
        equilibrate(&mut system)?;
        let det = match lu_factor(&system.matrix, node.kappa) {
            Ok(f) => f.det().norm(),
            Err(Error::SingularNode { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        if det < min_det {
            min_det = det;
            at = node.kappa;
        }
    }
    Ok((min_det, at))
}
