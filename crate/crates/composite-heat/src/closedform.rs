//! Closed-form fast paths for single-interface problems.
//!
//! With one interface the dense spectral system collapses and the interface
//! values admit explicit representations that sidestep the contour machinery
//! entirely:
//!
//! * on the whole line, the temperature and flux at the interface are heat
//!   kernel averages of the initial data with layer-dependent widths
//!   ([`n1_interface_values`]);
//! * on a finite interval with insulated ends, the interface trace is a
//!   contour integral of an explicit trigonometric ratio
//!   ([`n1_finite_neumann_values`]).
//!
//! Both serve as independent cross-checks for the general solver, and the
//! kernel averages double as the production path when a caller only needs
//! single-interface data. [`whole_line_reference`] covers the degenerate case
//! of equal conductivities, where the problem is classical.
//!
//! Real-line integrals are evaluated with [`KernelQuad`], an adaptive
//! Gauss-Legendre panel integrator. The integrands here are polynomials
//! against Gaussians, so the panels converge rapidly; the adaptivity exists
//! to handle sharply peaked kernels at small times without hand tuning.

use num_complex::Complex64;

use crate::contour::ContourSpec;
use crate::domain::{InitialData, TimeSignal};
use crate::error::{Error, Result};
use crate::transforms::scaled_time_transform;

/// Nodes of the 16-point Gauss-Legendre rule on `[-1, 1]` (positive half).
const GL16_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003_0,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];

/// Weights paired with [`GL16_X`].
const GL16_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_55,
    0.149_595_988_816_576_73,
    0.124_628_971_255_533_87,
    0.095_158_511_682_492_79,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_095,
];

/// Panels held simultaneously before the integrator gives up.
const MAX_PANELS: usize = 4096;

/// Initial uniform subdivision of the integration interval. Coarser seeds
/// risk missing kernels much narrower than the interval.
const SEED_PANELS: usize = 16;

/// Scaled denominators smaller than this (relative to the conductivities)
/// indicate a contour node sitting on top of a dispersion-relation zero.
const DENOM_THRESHOLD: f64 = 1e-12;

/// Adaptive Gauss-Legendre quadrature for smooth kernel integrands.
///
/// The interval is seeded with [`SEED_PANELS`] uniform panels. Each panel
/// carries a refined value (two half-panel 16-point rules) and an error
/// estimate (refined minus coarse); the panel with the worst estimate is
/// bisected until the summed estimates fall below the relative tolerance.
/// Splitting globally worst-first concentrates work on sharply peaked
/// kernels without a depth heuristic.
#[derive(Debug, Clone, Copy)]
pub struct KernelQuad {
    /// Relative tolerance on the integral value.
    pub tol: f64,
}

impl Default for KernelQuad {
    fn default() -> Self {
        KernelQuad { tol: 1e-10 }
    }
}

/// Panel record ordered by error estimate for the refinement heap.
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl Panel {
    fn build(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Panel {
        let coarse = gl16(f, a, b);
        let mid = 0.5 * (a + b);
        let value = gl16(f, a, mid) + gl16(f, mid, b);
        Panel {
            a,
            b,
            value,
            err: (value - coarse).abs(),
        }
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

impl KernelQuad {
    /// Integrates `f` over `[a, b]`.
    ///
    /// Fails with [`Error::QuadratureTolerance`] when the panel budget is
    /// exhausted before the estimates agree; the error carries the achieved
    /// estimate so callers can decide whether it is still usable.
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Ok(0.0);
        }
        let mut heap = std::collections::BinaryHeap::with_capacity(64);
        let seed_width = (b - a) / SEED_PANELS as f64;
        for i in 0..SEED_PANELS {
            let lo = a + i as f64 * seed_width;
            let hi = if i + 1 == SEED_PANELS { b } else { lo + seed_width };
            heap.push(Panel::build(&f, lo, hi));
        }
        loop {
            let total: f64 = heap.iter().map(|p| p.value).sum();
            let err: f64 = heap.iter().map(|p| p.err).sum();
            // The floor keeps integrals that are genuinely zero from
            // demanding impossible relative accuracy.
            let goal = self.tol * total.abs().max(1e-30);
            if err <= goal {
                return Ok(total);
            }
            if heap.len() >= MAX_PANELS {
                return Err(Error::QuadratureTolerance {
                    achieved: err,
                    requested: goal,
                });
            }
            let worst = heap.pop().expect("seeded heap is never empty");
            let mid = 0.5 * (worst.a + worst.b);
            heap.push(Panel::build(&f, worst.a, mid));
            heap.push(Panel::build(&f, mid, worst.b));
        }
    }
}

/// Single 16-point Gauss-Legendre estimate over `[a, b]`.
fn gl16(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (&x, &w) in GL16_X.iter().zip(GL16_W.iter()) {
        acc += w * (f(mid + half * x) + f(mid - half * x));
    }
    acc * half
}

/// Interface temperature and flux for one interface on the whole line.
///
/// The initial data must be expressed in interface coordinates: layer 1
/// supported on the left half-line, layer 2 on the right, meeting at zero.
/// Returns `(u(0, t), sigma_1^2 u_x(0, t))`.
///
/// The temperature is a heat-kernel average in which each half-line is probed
/// with its own diffusion width:
///
/// ```text
/// u(0,t) = [ int_-inf^0 G_1(y) u0_1(y) dy + int_0^inf G_2(y) u0_2(y) dy ]
///          / (sqrt(pi t) (s1 + s2)),        G_j(y) = exp(-y^2 / (4 s_j^2 t))
/// ```
///
/// and the flux is the matching first-moment average with the reciprocal
/// conductivity weights. Both follow from solving the two-layer system in
/// closed form, so this function is a genuinely independent check on the
/// contour solver: no spectral matrix is ever formed.
pub fn n1_interface_values(
    sigma1: f64,
    sigma2: f64,
    u0: &InitialData,
    t: f64,
) -> Result<(f64, f64)> {
    check_sigmas(&[sigma1, sigma2])?;
    if u0.layers.len() != 2 {
        return Err(Error::InvalidInput(vec![format!(
            "/initial/layers: expected 2 layers for a single interface, got {}",
            u0.layers.len()
        )]));
    }
    check_halfline_supports(u0)?;
    if t <= 0.0 {
        return Err(Error::InvalidInput(vec![format!(
            "/t: evaluation time must be positive, got {t}"
        )]));
    }
    let quad = KernelQuad::default();
    let mut value_sum = 0.0;
    let mut flux_sum = 0.0;
    for (idx, sigma) in [(0usize, sigma1), (1usize, sigma2)] {
        let inv_width = 1.0 / (4.0 * sigma * sigma * t);
        for piece in &u0.layers[idx] {
            let g = |y: f64| (-y * y * inv_width).exp() * piece.eval_poly(y);
            value_sum += quad.integrate(g, piece.support.0, piece.support.1)?;
            let weight = if idx == 0 { sigma2 / sigma1 } else { sigma1 / sigma2 };
            let h = |y: f64| y * (-y * y * inv_width).exp() * piece.eval_poly(y);
            flux_sum += weight * quad.integrate(h, piece.support.0, piece.support.1)?;
        }
    }
    let root = (std::f64::consts::PI * t).sqrt();
    let value = value_sum / (root * (sigma1 + sigma2));
    let flux = flux_sum / (2.0 * t * root * (sigma1 + sigma2));
    Ok((value, flux))
}

/// Classical single-medium heat solution, `u(x, t)` for conductivity `sigma`.
///
/// Convolves all pieces of `u0` (every layer, concatenated) with the heat
/// kernel `exp(-(x-y)^2 / (4 sigma^2 t)) / sqrt(4 pi sigma^2 t)`. Intended as
/// a reference for composite problems whose conductivities all coincide,
/// where the interfaces become invisible.
pub fn whole_line_reference(u0: &InitialData, sigma: f64, x: f64, t: f64) -> Result<f64> {
    check_sigmas(&[sigma])?;
    if t <= 0.0 {
        return Err(Error::InvalidInput(vec![format!(
            "/t: evaluation time must be positive, got {t}"
        )]));
    }
    let quad = KernelQuad::default();
    let inv_width = 1.0 / (4.0 * sigma * sigma * t);
    let mut acc = 0.0;
    for layer in &u0.layers {
        for piece in layer {
            let g = |y: f64| (-(x - y) * (x - y) * inv_width).exp() * piece.eval_poly(y);
            acc += quad.integrate(g, piece.support.0, piece.support.1)?;
        }
    }
    Ok(acc / (4.0 * std::f64::consts::PI * sigma * sigma * t).sqrt())
}

/// Interface temperature and flux for one interface between insulated walls.
///
/// Geometry is the normalized frame: walls at `0` and `x2`, interface at
/// `x1 in (0, x2)`, zero initial data, and prescribed Neumann values
/// `u_x(0, t) = f1(t)`, `u_x(x2, t) = f2(t)`. Returns
/// `(u(x1, t), sigma_1^2 u_x(x1, t))`.
///
/// For this configuration the per-node linear system can be eliminated by
/// hand, leaving a scalar contour integrand in terms of the dispersion
/// function
///
/// ```text
/// D(k) = s1 cos(k (x1 - x2)/s2) sin(k x1/s1)
///      - s2 cos(k x1/s1) sin(k (x1 - x2)/s2)
/// ```
///
/// The trigonometric factors grow like `exp(|Im| ...)` along the contour, so
/// numerator and denominator are both damped by the same exponential before
/// dividing; the ratio is exact while every stored intermediate stays
/// bounded. A damped denominator collapsing below [`DENOM_THRESHOLD`]
/// (relative to the conductivities) means a quadrature node is effectively
/// sitting on a zero of `D`, which surfaces as [`Error::PoleProximity`].
pub fn n1_finite_neumann_values(
    sigma1: f64,
    sigma2: f64,
    x1: f64,
    x2: f64,
    f1: &TimeSignal,
    f2: &TimeSignal,
    spec: &ContourSpec,
    t: f64,
) -> Result<(f64, f64)> {
    check_sigmas(&[sigma1, sigma2])?;
    let mut problems = Vec::new();
    if !(x1 > 0.0 && x2 > x1) {
        problems.push(format!(
            "/domain/breakpoints: need 0 < x1 < x2 in the normalized frame, got x1 = {x1}, x2 = {x2}"
        ));
    }
    if t <= 0.0 {
        problems.push(format!("/t: evaluation time must be positive, got {t}"));
    }
    if !problems.is_empty() {
        return Err(Error::InvalidInput(problems));
    }
    spec.validate()?;

    let mut u_acc = Complex64::new(0.0, 0.0);
    let mut f_acc = Complex64::new(0.0, 0.0);
    for (kappa, weight) in spec.nodes() {
        let cap_f1 = scaled_time_transform(f1, kappa, t)?;
        let cap_f2 = scaled_time_transform(f2, kappa, t)?;

        let za = kappa * x1 / sigma1;
        let zb = kappa * (x1 - x2) / sigma2;
        let ma = za.im.abs();
        let mb = zb.im.abs();
        // cos/sin damped by their own growth rate; products below recombine
        // the exponents so numerator and denominator share the total damping
        // exp(-(ma + mb)).
        let cos_a = cos_scaled(za);
        let sin_a = sin_scaled(za);
        let cos_b = cos_scaled(zb);
        let sin_b = sin_scaled(zb);
        let denom = sigma1 * cos_b * sin_a - sigma2 * cos_a * sin_b;
        let scale = sigma1 + sigma2;
        if denom.norm() < DENOM_THRESHOLD * scale {
            return Err(Error::PoleProximity {
                kappa,
                min_abs: denom.norm(),
                detail: "dispersion denominator vanished on the contour; perturb R or delta"
                    .into(),
            });
        }
        // exp(-ma) / exp(-mb) may underflow to zero far up the rays; that is
        // the correct limit for the corresponding cross terms.
        let num_u =
            sigma1 * sigma1 * cap_f1 * cos_b * (-ma).exp() - sigma2 * sigma2 * cap_f2 * cos_a * (-mb).exp();
        let num_f = sigma1 * cap_f1 * sin_b * (-ma).exp() - sigma2 * cap_f2 * sin_a * (-mb).exp();
        u_acc += weight * num_u / denom;
        f_acc += weight * kappa * num_f / denom;
    }
    let u = (u_acc * Complex64::new(0.0, -std::f64::consts::FRAC_1_PI)).re;
    let flux = (f_acc * Complex64::new(0.0, sigma1 * sigma2 * std::f64::consts::FRAC_1_PI)).re;
    Ok((u, flux))
}

/// `cos(z) * exp(-|Im z|)`, evaluated without forming the unbounded factors.
fn cos_scaled(z: Complex64) -> Complex64 {
    let m = z.im.abs();
    let i = Complex64::i();
    ((i * z - m).exp() + (-i * z - m).exp()) * 0.5
}

/// `sin(z) * exp(-|Im z|)`, evaluated without forming the unbounded factors.
fn sin_scaled(z: Complex64) -> Complex64 {
    let m = z.im.abs();
    let i = Complex64::i();
    ((i * z - m).exp() - (-i * z - m).exp()) * Complex64::new(0.0, -0.5)
}

fn check_sigmas(sigmas: &[f64]) -> Result<()> {
    let bad: Vec<String> = sigmas
        .iter()
        .enumerate()
        .filter(|(_, s)| !(s.is_finite() && **s > 0.0))
        .map(|(i, s)| format!("/domain/sigmas/{i}: conductivity must be positive, got {s}"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(bad))
    }
}

fn check_halfline_supports(u0: &InitialData) -> Result<()> {
    let mut problems = Vec::new();
    for (p, piece) in u0.layers[0].iter().enumerate() {
        if piece.support.1 > 1e-12 {
            problems.push(format!(
                "/initial/layers/0/{p}: left-layer support must sit in (-inf, 0], ends at {}",
                piece.support.1
            ));
        }
    }
    for (p, piece) in u0.layers[1].iter().enumerate() {
        if piece.support.0 < -1e-12 {
            problems.push(format!(
                "/initial/layers/1/{p}: right-layer support must sit in [0, inf), starts at {}",
                piece.support.0
            ));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(problems))
    }
}
