//! Helpers shared by the integration suites: polynomial bump construction,
//! domain mirroring, and seeded random problem instances.

#![allow(dead_code)]

use composite_heat::{
    CompositeDomain, DomainKind, InitialData, PolyPiece, RobinBoundary, TimeSignal,
};
use rand::Rng;

/// Product of two coefficient vectors (ascending powers).
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `amp * (1 - u^2)^2` with `u` the affine map sending `[a, b]` to
/// `[-1, 1]`: a C^1 bump supported exactly on `[a, b]`, expressed in plain
/// `x` coefficients.
pub fn bump_piece(a: f64, b: f64, amp: f64) -> PolyPiece {
    assert!(b > a, "bump support must have positive width");
    let alpha = 2.0 / (b - a);
    let beta = -(a + b) / (b - a);
    let u = [beta, alpha];
    let u2 = poly_mul(&u, &u);
    // 1 - u^2
    let mut core = vec![0.0; u2.len()];
    core[0] = 1.0 - u2[0];
    for i in 1..u2.len() {
        core[i] = -u2[i];
    }
    let mut coeffs = poly_mul(&core, &core);
    for c in &mut coeffs {
        *c *= amp;
    }
    PolyPiece::new(a, b, coeffs)
}

/// `p(-x)` on the mirrored support.
pub fn mirror_piece(p: &PolyPiece) -> PolyPiece {
    let coeffs: Vec<f64> = p
        .coeffs
        .iter()
        .enumerate()
        .map(|(m, &c)| if m % 2 == 0 { c } else { -c })
        .collect();
    PolyPiece::new(-p.support.1, -p.support.0, coeffs)
}

/// The domain seen through `x -> -x`: breakpoints negated and reversed,
/// layer order reversed.
pub fn mirror_domain(d: &CompositeDomain) -> CompositeDomain {
    let breakpoints: Vec<f64> = d.breakpoints.iter().rev().map(|&x| -x).collect();
    let sigmas: Vec<f64> = d.sigmas.iter().rev().cloned().collect();
    match d.kind {
        DomainKind::Infinite => CompositeDomain::infinite(breakpoints, sigmas),
        DomainKind::Finite => CompositeDomain::finite(breakpoints, sigmas),
    }
}

/// The initial data seen through `x -> -x` (layer order reversed, every
/// piece mirrored).
pub fn mirror_initial(u0: &InitialData) -> InitialData {
    let layers: Vec<Vec<PolyPiece>> = u0
        .layers
        .iter()
        .rev()
        .map(|pieces| pieces.iter().map(mirror_piece).collect())
        .collect();
    InitialData::new(layers)
}

/// Random sigmas with adjacent ratios kept moderate (so both the contour
/// roundoff bound and the FD oracle stay comfortably inside tolerance).
pub fn random_sigmas<R: Rng>(rng: &mut R, layers: usize) -> Vec<f64> {
    let mut sigmas = Vec::with_capacity(layers);
    let mut s: f64 = rng.gen_range(0.7..1.6);
    sigmas.push(s);
    for _ in 1..layers {
        s = (s * rng.gen_range(0.65..1.5)).clamp(0.6, 2.2);
        sigmas.push(s);
    }
    sigmas
}

/// One bump strictly inside `(lo, hi)`, inset from both ends.
fn bump_within<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> Option<PolyPiece> {
    let margin = 0.05;
    let avail = hi - lo - 2.0 * margin;
    if avail < 0.25 {
        return None;
    }
    let w = rng.gen_range(0.25..avail.min(1.2));
    let a = lo + margin + rng.gen_range(0.0..(avail - w).max(1e-9));
    let amp = rng.gen_range(0.25..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    Some(bump_piece(a, a + w, amp))
}

/// Random piecewise-polynomial initial data: at most one bump per layer,
/// outer (semi-infinite) layers limited to a band near their interface, at
/// least one layer nonzero.
pub fn random_bumps<R: Rng>(rng: &mut R, domain: &CompositeDomain) -> InitialData {
    let nl = domain.layer_count();
    let bps = domain.interface_positions();
    let mut layers: Vec<Vec<PolyPiece>> = vec![Vec::new(); nl];
    for (j, pieces) in layers.iter_mut().enumerate() {
        if rng.gen_bool(0.2) {
            continue;
        }
        let (lo, hi) = match domain.kind {
            DomainKind::Finite => domain.layer_interval(j + 1),
            DomainKind::Infinite => {
                let (lo, hi) = domain.layer_interval(j + 1);
                // Clip the unbounded outer layers to a band of width ~1.3
                // next to their interface.
                (lo.max(bps[0] - 1.3), hi.min(bps[bps.len() - 1] + 1.3))
            }
        };
        if let Some(p) = bump_within(rng, lo, hi) {
            pieces.push(p);
        }
    }
    if layers.iter().all(Vec::is_empty) {
        let (lo, hi) = match domain.kind {
            DomainKind::Finite => domain.layer_interval(1),
            DomainKind::Infinite => (bps[0] - 1.3, bps[0]),
        };
        layers[0].push(bump_piece(lo + 0.1, hi - 0.05, 0.8));
    }
    InitialData::new(layers)
}

/// Random whole-line domain with `n` interfaces (gaps at least 0.35).
pub fn random_infinite_domain<R: Rng>(rng: &mut R, n: usize) -> CompositeDomain {
    let mut breakpoints = Vec::with_capacity(n);
    let mut x = rng.gen_range(-0.9..-0.2);
    breakpoints.push(x);
    for _ in 1..n {
        x += rng.gen_range(0.4..0.9);
        breakpoints.push(x);
    }
    let sigmas = random_sigmas(rng, n + 1);
    CompositeDomain::infinite(breakpoints, sigmas)
}

/// Random interval domain with `n` interior interfaces.
pub fn random_finite_domain<R: Rng>(rng: &mut R, n: usize) -> CompositeDomain {
    let x0 = -1.0 - rng.gen_range(0.0..0.3);
    let xr = 1.0 + rng.gen_range(0.0..0.3);
    let mut breakpoints = vec![x0];
    match n {
        1 => breakpoints.push(rng.gen_range(-0.4..0.4)),
        2 => {
            let x1 = rng.gen_range(-0.6..-0.1);
            breakpoints.push(x1);
            breakpoints.push(x1 + rng.gen_range(0.45..0.9));
        }
        _ => {
            let mut x = rng.gen_range(-0.7..-0.3);
            for _ in 0..n {
                breakpoints.push(x);
                x += rng.gen_range(0.45..(1.4 / n as f64).max(0.5));
            }
        }
    }
    breakpoints.push(xr);
    let sigmas = random_sigmas(rng, n + 1);
    CompositeDomain::finite(breakpoints, sigmas)
}

/// Random well-posed Robin data with piecewise-constant forcing. The sign
/// conventions (`beta1/beta2 <= 0`, `beta3/beta4 >= 0`) keep the boundary
/// terms dissipative, so the continuum problem is stable.
pub fn random_robin<R: Rng>(rng: &mut R) -> RobinBoundary {
    let beta = [
        -rng.gen_range(0.0..1.5),
        rng.gen_range(0.6..2.0),
        rng.gen_range(0.0..1.5),
        rng.gen_range(0.6..2.0),
    ];
    let signal = |rng: &mut R| {
        if rng.gen_bool(0.3) {
            TimeSignal::Constant {
                value: rng.gen_range(-0.8..0.8),
            }
        } else {
            TimeSignal::Piecewise {
                breaks: vec![0.0, rng.gen_range(0.1..0.25)],
                values: vec![rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)],
            }
        }
    };
    let f_left = signal(rng);
    let f_right = signal(rng);
    RobinBoundary {
        beta,
        f_left,
        f_right,
    }
}

/// Largest absolute difference between two equally long slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Three initial data sets sharing one support per layer: `a`, `b`, and the
/// exact pointwise combination `ca*a + cb*b` (coefficients combined piece by
/// piece, so the third argument *is* the linear combination, not an
/// approximation of it).
pub fn random_linear_family<R: Rng>(
    rng: &mut R,
    domain: &CompositeDomain,
    ca: f64,
    cb: f64,
) -> (InitialData, InitialData, InitialData) {
    let bps = domain.interface_positions();
    let nl = domain.layer_count();
    let mut la = Vec::with_capacity(nl);
    let mut lb = Vec::with_capacity(nl);
    let mut lc = Vec::with_capacity(nl);
    for j in 1..=nl {
        let (lo, hi) = match domain.kind {
            DomainKind::Finite => domain.layer_interval(j),
            DomainKind::Infinite => {
                let (lo, hi) = domain.layer_interval(j);
                (lo.max(bps[0] - 1.3), hi.min(bps[bps.len() - 1] + 1.3))
            }
        };
        let margin = 0.05;
        let avail = hi - lo - 2.0 * margin;
        if avail < 0.25 {
            la.push(Vec::new());
            lb.push(Vec::new());
            lc.push(Vec::new());
            continue;
        }
        let w = rng.gen_range(0.25..avail.min(1.2));
        let a = lo + margin + rng.gen_range(0.0..(avail - w).max(1e-9));
        let deg = rng.gen_range(0..=4);
        let ca_coeffs: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb_coeffs: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cc_coeffs: Vec<f64> = ca_coeffs
            .iter()
            .zip(&cb_coeffs)
            .map(|(&x, &y)| ca * x + cb * y)
            .collect();
        la.push(vec![PolyPiece::new(a, a + w, ca_coeffs)]);
        lb.push(vec![PolyPiece::new(a, a + w, cb_coeffs)]);
        lc.push(vec![PolyPiece::new(a, a + w, cc_coeffs)]);
    }
    (
        InitialData::new(la),
        InitialData::new(lb),
        InitialData::new(lc),
    )
}

/// Initial data that is identically `c0` across every interface (one
/// constant run spanning them all), with optional disjoint bumps far from
/// the interfaces. Continuous at each interface with value `c0`.
pub fn plateau_data<R: Rng>(rng: &mut R, domain: &CompositeDomain) -> (InitialData, f64) {
    let bps = domain.interface_positions();
    let n = bps.len();
    let c0 = rng.gen_range(0.3..1.0);
    let mut layers: Vec<Vec<PolyPiece>> = Vec::with_capacity(n + 1);
    for j in 1..=(n + 1) {
        let (lo, hi) = domain.layer_interval(j);
        let a = lo.max(bps[0] - 1.0);
        let b = hi.min(bps[n - 1] + 1.0);
        let mut pieces = vec![PolyPiece::new(a, b, vec![c0])];
        if j == 1 && rng.gen_bool(0.5) {
            pieces.push(bump_piece(
                bps[0] - 2.2,
                bps[0] - 1.2,
                rng.gen_range(-1.0..1.0),
            ));
        }
        if j == n + 1 && rng.gen_bool(0.5) {
            pieces.push(bump_piece(
                bps[n - 1] + 1.2,
                bps[n - 1] + 2.2,
                rng.gen_range(-1.0..1.0),
            ));
        }
        layers.push(pieces);
    }
    (InitialData::new(layers), c0)
}

/// Sampled sup norm of the initial data (dense sampling of every support).
pub fn sup_sampled(u0: &InitialData) -> f64 {
    let mut sup = 0.0_f64;
    for (j, pieces) in u0.layers.iter().enumerate() {
        for p in pieces {
            let (a, b) = p.support;
            for i in 0..=256 {
                let x = a + (b - a) * (i as f64) / 256.0;
                sup = sup.max(u0.eval_layer(j + 1, x).abs());
            }
        }
    }
    sup
}
