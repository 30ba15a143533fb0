//! Spectral transforms of the problem data.
//!
//! Two families feed the global-relation systems:
//!
//! * space: `piece_transform` computes `int_a^b e^{-i k x} p(x) dx` for a
//!   polynomial piece, exactly (closed form) or by a short Taylor series
//!   when `|k| (b - a)` is tiny and the closed form would cancel;
//! * time: `scaled_time_transform` computes the *tilted* transform
//!   `int_0^t e^{kappa^2 (s - t)} f(s) ds = e^{-kappa^2 t} f~(kappa^2, t)`
//!   of a boundary signal. The tilt keeps magnitudes bounded wherever
//!   `Re(kappa^2) >= 0`, which holds on the contour rays.
//!
//! Both are exact in exact arithmetic; neither samples the integrand.

use num_complex::Complex64;

use crate::domain::{InitialData, PolyPiece, TimeSignal, MAX_POLY_DEGREE};
use crate::error::{Error, Result};

/// `|k| * (b - a)` below which the series branch replaces the closed form.
pub const SERIES_SWITCH: f64 = 1e-2;

/// Real exponent beyond which `exp` would overflow f64.
const EXP_LIMIT: f64 = 700.0;

/// A contour node; caches `kappa^2` since every assembly touches it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub kappa: Complex64,
    pub kappa_sq: Complex64,
}

impl SpectralPoint {
    pub fn new(kappa: Complex64) -> Self {
        SpectralPoint {
            kappa,
            kappa_sq: kappa * kappa,
        }
    }
}

/// Which evaluation path `piece_transform` takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformBranch {
    /// Series below [`SERIES_SWITCH`], closed form above (production path).
    Auto,
    /// Force the truncated Taylor series in `k`.
    Series,
    /// Force the closed form (integration by parts).
    ClosedForm,
}

/// `int_a^b e^{-i k x} p(x) dx`.
pub fn piece_transform(piece: &PolyPiece, k: Complex64) -> Result<Complex64> {
    piece_transform_scaled(piece, k, 0.0, TransformBranch::Auto)
}

/// `int_a^b e^{-i k x} p(x) dx` with a chosen branch (used by the
/// branch-agreement tests; `Auto` is the production behaviour).
pub fn piece_transform_with(
    piece: &PolyPiece,
    k: Complex64,
    branch: TransformBranch,
) -> Result<Complex64> {
    piece_transform_scaled(piece, k, 0.0, branch)
}

/// `e^{-shift} * int_a^b e^{-i k x} p(x) dx`, computed without letting any
/// intermediate value grow past `e^{max(0, Im k * anchor - shift)}`.
///
/// Assembly passes the row's dominant exponent as `shift` so that spectral
/// data enters the linear system pre-scaled; with `shift = 0` this is the
/// plain transform. The integral is anchored at the support endpoint where
/// `|e^{-i k x}|` peaks, which keeps the inner kernel bounded by 1.
pub fn piece_transform_scaled(
    piece: &PolyPiece,
    k: Complex64,
    shift: f64,
    branch: TransformBranch,
) -> Result<Complex64> {
    let (a, b) = piece.support;
    let w = b - a;
    debug_assert!(w > 0.0, "piece support must have positive width");
    debug_assert!(piece.degree() <= MAX_POLY_DEGREE);

    // Anchor at the endpoint where Re(-i k x) is largest so the remaining
    // kernel satisfies |e^{z tau}| <= 1.
    //   anchor b: x = b - s  =>  e^{-i k b} int_0^w e^{i k s} p(b - s) ds
    //   anchor a: x = a + s  =>  e^{-i k a} int_0^w e^{-i k s} p(a + s) ds
    let anchor_at_b = k.im >= 0.0;
    let (anchor, sign, z) = if anchor_at_b {
        (b, -1.0, Complex64::i() * k * w)
    } else {
        (a, 1.0, -Complex64::i() * k * w)
    };
    debug_assert!(z.re <= 1e-12 * z.norm().max(1.0));

    let exponent = -Complex64::i() * k * anchor - shift;
    if exponent.re > EXP_LIMIT {
        return Err(Error::Overflow {
            context: "piece transform".into(),
            kappa: k,
            exponent: exponent.re,
        });
    }
    let prefactor = exponent.exp();

    let q = recenter(&piece.coeffs, anchor, sign);
    let deg = q.len() - 1;
    let use_series = match branch {
        TransformBranch::Auto => k.norm() * w < SERIES_SWITCH,
        TransformBranch::Series => true,
        TransformBranch::ClosedForm => false,
    };
    let phi = if use_series {
        phi_series(z, deg)
    } else {
        phi_closed(z, deg)
    };

    // int_0^w s^m e^{±iks} ds = w^{m+1} phi_m(z)
    let mut sum = Complex64::new(0.0, 0.0);
    let mut wpow = w;
    for (m, &qm) in q.iter().enumerate() {
        sum += qm * wpow * phi[m];
        wpow *= w;
    }
    Ok(prefactor * sum)
}

/// Transform of layer `j`'s data (1-based): sum of [`piece_transform`] over
/// the layer's pieces; zero for an empty layer.
pub fn layer_transform(u0: &InitialData, j: usize, k: Complex64) -> Result<Complex64> {
    layer_transform_scaled(u0, j, k, 0.0)
}

/// Scaled version of [`layer_transform`]; see [`piece_transform_scaled`].
pub fn layer_transform_scaled(
    u0: &InitialData,
    j: usize,
    k: Complex64,
    shift: f64,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for p in &u0.layers[j - 1] {
        acc += piece_transform_scaled(p, k, shift, TransformBranch::Auto)?;
    }
    Ok(acc)
}

/// Tilted time transform `int_0^t e^{kappa^2 (s - t)} f(s) ds`.
///
/// For `Re(kappa^2) >= 0` and `|f| <= M` the result is bounded by `M * t`
/// (every kernel value has magnitude at most 1).
pub fn scaled_time_transform(f: &TimeSignal, kappa: Complex64, t: f64) -> Result<Complex64> {
    if t <= 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let k2 = kappa * kappa;
    match f {
        TimeSignal::Zero => Ok(Complex64::new(0.0, 0.0)),
        TimeSignal::Constant { value } => segment_integral(*value, 0.0, t, t, k2, kappa),
        TimeSignal::Piecewise { breaks, values } => {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &v) in values.iter().enumerate() {
                let lo = breaks[i];
                let hi = if i + 1 < breaks.len() {
                    breaks[i + 1].min(t)
                } else {
                    t
                };
                if lo >= t {
                    break;
                }
                if hi > lo {
                    acc += segment_integral(v, lo, hi, t, k2, kappa)?;
                }
            }
            Ok(acc)
        }
    }
}

/// `v * int_lo^hi e^{k2 (s - t)} ds`, written as
/// `v * e^{k2 (hi - t)} * (hi - lo) * em1(-k2 (hi - lo))` so the two
/// exponential endpoints never cancel destructively.
fn segment_integral(
    v: f64,
    lo: f64,
    hi: f64,
    t: f64,
    k2: Complex64,
    kappa: Complex64,
) -> Result<Complex64> {
    let lead = k2 * (hi - t);
    if lead.re > EXP_LIMIT {
        return Err(Error::Overflow {
            context: "time transform".into(),
            kappa,
            exponent: lead.re,
        });
    }
    let h = hi - lo;
    let z = -k2 * h;
    if z.re > EXP_LIMIT {
        return Err(Error::Overflow {
            context: "time transform".into(),
            kappa,
            exponent: z.re,
        });
    }
    Ok(v * lead.exp() * h * em1(z))
}

/// `(e^z - 1)/z` with a series fallback near the removable singularity.
fn em1(z: Complex64) -> Complex64 {
    if z.norm() < 0.25 {
        // sum_{q>=0} z^q / (q+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for q in 1..30 {
            term *= z / (q + 1) as f64;
            sum += term;
            if term.norm() <= 1e-20 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Coefficients of `p(anchor + sign * s)` as a polynomial in `s`.
fn recenter(coeffs: &[f64], anchor: f64, sign: f64) -> Vec<f64> {
    let deg = coeffs.len() - 1;
    let mut out = vec![0.0; deg + 1];
    for (m, &c) in coeffs.iter().enumerate() {
        // c * (anchor + sign s)^m = c * sum_i C(m,i) anchor^(m-i) sign^i s^i
        let mut binom = 1.0;
        for i in 0..=m {
            let apow = if m - i == 0 {
                1.0
            } else {
                anchor.powi((m - i) as i32)
            };
            out[i] += c * binom * apow * sign.powi(i as i32);
            binom *= (m - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

/// `phi_m(z) = int_0^1 tau^m e^{z tau} d tau` for `m = 0..=deg`, by the
/// truncated Taylor series `sum_q z^q / (q! (m + q + 1))`.
fn phi_series(z: Complex64, deg: usize) -> Vec<Complex64> {
    let mut phi = vec![Complex64::new(0.0, 0.0); deg + 1];
    for (m, slot) in phi.iter_mut().enumerate() {
        let mut zq = Complex64::new(1.0, 0.0); // z^q / q!
        let mut sum = zq / (m as f64 + 1.0);
        for q in 1..120 {
            zq *= z / q as f64;
            let term = zq / (m + q + 1) as f64;
            sum += term;
            if term.norm() <= 1e-20 * sum.norm().max(1e-300) {
                break;
            }
        }
        *slot = sum;
    }
    phi
}

/// `phi_m(z)` by the integration-by-parts recurrence
/// `phi_m = (e^z - m phi_{m-1}) / z`.
///
/// Run upward only when `|z|` comfortably exceeds the top degree (each step
/// then damps errors by `m/|z|`); otherwise run the same recurrence downward
/// from a zero seed high above `deg`, where each step damps by `|z|/m`.
/// Requires `Re z <= 0` (guaranteed by the anchoring in the caller).
fn phi_closed(z: Complex64, deg: usize) -> Vec<Complex64> {
    let ez = z.exp();
    let mut phi = vec![Complex64::new(0.0, 0.0); deg + 1];
    if z.norm() >= 2.0 * (deg as f64 + 1.0) {
        phi[0] = (ez - 1.0) / z;
        for m in 1..=deg {
            phi[m] = (ez - m as f64 * phi[m - 1]) / z;
        }
    } else {
        let start = deg + 40 + (1.5 * z.norm()).ceil() as usize;
        let mut cur = Complex64::new(0.0, 0.0); // seed phi_start = 0
        for m in (1..=start).rev() {
            // phi_{m-1} = (e^z - z phi_m) / m
            cur = (ez - z * cur) / m as f64;
            if m - 1 <= deg {
                phi[m - 1] = cur;
            }
        }
    }
    phi
}
