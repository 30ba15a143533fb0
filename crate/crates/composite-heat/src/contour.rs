//! The integration contour and the interface maps themselves.
//!
//! The interface values are recovered from the per-node solves by the
//! quadrature
//!
//! ```text
//! u(x_j, t)   = Re (1/(i pi)) sum_i w_i kappa_i g0_j(kappa_i)
//! u_x(x_j, t) = Re (1/(i pi)) sum_i w_i kappa_i g1_j(kappa_i)
//! ```
//!
//! over a contour in the upper half-plane: an arc of radius `R` closed by
//! two rays. On the undeformed boundary (rays at arg `pi/4` and `3 pi/4`)
//! the integrand only decays algebraically; tilting the rays *inward* by an
//! angle `delta` gives `Re(kappa^2) = |kappa|^2 sin(2 delta) > 0` along
//! them, hence exponential decay of the `e^{-kappa^2 t}` factor, at no cost
//! by analyticity of the integrand between the two contours. Rays are
//! truncated at arclength `L` where the tilt factor is below roundoff for
//! the smallest time of interest.
//!
//! The radius default starts from the adjacent-diffusivity ratio (zeros of
//! `det A` live in a strip along the real axis whose width grows with the
//! layer contrast) but is capped by the time horizon: on the arc the tilt
//! *grows* like `e^{R^2 t}`, and summing terms of that size costs
//! `eps * e^{R^2 t}` in absolute roundoff. The cap `R^2 t_max <= 15` keeps
//! that term near 1e-9. [`adapt_r`] re-enlarges the radius only when a
//! determinant scan actually detects a nearby zero, reporting honestly if
//! certification fails.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::assembly::{
    build_finite, build_infinite, det_scan, equilibrate, solve_node, SystemKind,
};
use crate::domain::{CompositeDomain, DomainKind, InitialData, Problem, RobinBoundary};
use crate::error::{Error, Result};
use crate::linalg::lu_factor;
use crate::transforms::SpectralPoint;

/// Earliest supported evaluation time: the map's kernel degenerates to a
/// delta distribution at `t = 0`, and quadrature cost grows like
/// `1/sqrt(t_min)`.
pub const T_MIN: f64 = 1e-3;

/// `|det|` (equilibrated) below which a contour is considered to graze a
/// zero of `det A`.
pub const DET_THRESHOLD: f64 = 1e-8;

/// Maximum factor by which [`adapt_r`] will enlarge the radius.
pub const ADAPT_R_CAP: f64 = 1024.0;

/// Quadrature rule for the contour segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// 16-point Gauss-Legendre panels (default).
    #[default]
    GaussLegendre,
    /// Composite Simpson.
    Simpson,
}

/// Geometry and resolution of the deformed contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    /// Arc radius.
    #[serde(rename = "R")]
    pub r: f64,
    /// Inward ray deformation angle; rays sit at arg `pi/4 - delta` and
    /// `3 pi/4 + delta`.
    pub delta: f64,
    /// Ray truncation arclength.
    #[serde(rename = "L")]
    pub l: f64,
    /// Quadrature nodes per unit arclength.
    pub density: f64,
    #[serde(default)]
    pub rule: QuadratureRule,
}

impl ContourSpec {
    /// Default contour for a problem evaluated at times within
    /// `[t_min, t_max]` (both clamped to [`T_MIN`] from below).
    pub fn for_problem(domain: &CompositeDomain, t_min: f64, t_max: f64) -> ContourSpec {
        let t_min = t_min.max(T_MIN);
        let t_max = t_max.max(t_min);
        let delta = std::f64::consts::PI / 12.0;
        // Ray ends where |e^{-kappa^2 t_min}| ~ 1e-16.
        let mut l = (37.0 / (t_min * (2.0 * delta).sin())).sqrt();
        // Radius: clear the zero strip (ratio heuristic) without letting the
        // arc's e^{R^2 t} roundoff exceed ~1e-9 at the largest time.
        let r = (1.0 + domain.max_sigma_ratio())
            .min((15.0 / t_max).sqrt())
            .max(1.25);
        // Interval problems carry a second, slower tail: boundary data
        // reaches interface j through transfer factors e^{i kappa (x_j -
        // wall)}, which decay along the rays only like e^{-Im(kappa) gap}
        // (one power of |kappa| in the exponent, not two). Stretch L until
        // that factor is also ~1e-16 at the interface nearest a wall.
        if domain.kind == DomainKind::Finite && domain.interface_count() >= 1 {
            let b = &domain.breakpoints;
            let gap = (b[1] - b[0]).min(b[b.len() - 1] - b[b.len() - 2]);
            let ray_sin = (std::f64::consts::FRAC_PI_4 - delta).sin();
            l = l.max(37.0 / (gap * ray_sin) - r);
        }
        ContourSpec {
            r,
            delta,
            l,
            density: 16.0,
            rule: QuadratureRule::GaussLegendre,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.r > 0.0) || !self.r.is_finite() {
            bad.push("/contour/R: must be positive".to_string());
        }
        if !(self.delta > 0.0 && self.delta <= std::f64::consts::PI / 8.0) {
            bad.push("/contour/delta: must lie in (0, pi/8]".to_string());
        }
        if !(self.l > 0.0) || !self.l.is_finite() {
            bad.push("/contour/L: must be positive".to_string());
        }
        if !(self.density >= 4.0) {
            bad.push("/contour/density: must be at least 4".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(bad))
        }
    }

    /// Quadrature nodes and complex weights (the weights carry the line
    /// element `d kappa`, so `sum_i f(kappa_i) w_i` approximates the contour
    /// integral). Traversal: incoming ray from `|kappa| = R + L` down to
    /// `R` at arg `3 pi/4 + delta`, the arc from that angle down to
    /// `pi/4 - delta`, then the outgoing ray back out to `R + L`.
    pub fn nodes(&self) -> Vec<(Complex64, Complex64)> {
        let th_in = 3.0 * std::f64::consts::PI / 4.0 + self.delta;
        let th_out = std::f64::consts::PI / 4.0 - self.delta;
        let mut out = Vec::new();

        // Incoming ray: kappa = r e^{i th_in}, d kappa = e^{i th_in} dr.
        let dir_in = Complex64::from_polar(1.0, th_in);
        segment_nodes(self, self.r + self.l, self.r, |r, w| {
            (r * dir_in, w * dir_in)
        }, &mut out);

        // Arc: kappa = R e^{i th}, d kappa = i R e^{i th} d th.
        let arc_len = self.r * (th_in - th_out);
        let arc_panels = panel_count(arc_len, self.density);
        arc_or_ray_nodes(self, th_in, th_out, arc_panels, |th, w| {
            let e = Complex64::from_polar(self.r, th);
            (e, w * Complex64::i() * e)
        }, &mut out);

        // Outgoing ray.
        let dir_out = Complex64::from_polar(1.0, th_out);
        segment_nodes(self, self.r, self.r + self.l, |r, w| {
            (r * dir_out, w * dir_out)
        }, &mut out);

        out
    }

    /// Number of nodes that [`nodes`](Self::nodes) will produce.
    pub fn node_count(&self) -> usize {
        self.nodes().len()
    }
}

fn panel_count(len: f64, density: f64) -> usize {
    ((len.abs() * density / 16.0).ceil() as usize).max(1)
}

fn segment_nodes(
    spec: &ContourSpec,
    a: f64,
    b: f64,
    map: impl Fn(f64, f64) -> (Complex64, Complex64),
    out: &mut Vec<(Complex64, Complex64)>,
) {
    let panels = panel_count(spec.l, spec.density);
    arc_or_ray_nodes(spec, a, b, panels, map, out);
}

/// Lay quadrature nodes on the parameter interval `[a, b]` (either order)
/// and push them through `map` (parameter, weight) -> (kappa, weight dkappa).
fn arc_or_ray_nodes(
    spec: &ContourSpec,
    a: f64,
    b: f64,
    panels: usize,
    map: impl Fn(f64, f64) -> (Complex64, Complex64),
    out: &mut Vec<(Complex64, Complex64)>,
) {
    match spec.rule {
        QuadratureRule::GaussLegendre => {
            for p in 0..panels {
                let lo = a + (b - a) * p as f64 / panels as f64;
                let hi = a + (b - a) * (p + 1) as f64 / panels as f64;
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                for (&x, &w) in GL16_X.iter().zip(GL16_W.iter()) {
                    out.push(map(mid + half * x, half * w));
                }
            }
        }
        QuadratureRule::Simpson => {
            // Composite Simpson with an even interval count matching the
            // Gauss-Legendre node budget.
            let intervals = (panels * 16).next_multiple_of(2);
            let h = (b - a) / intervals as f64;
            for i in 0..=intervals {
                let x = a + h * i as f64;
                let c = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                out.push(map(x, c * h / 3.0));
            }
        }
    }
}

/// 16-point Gauss-Legendre nodes on [-1, 1], ascending.
const GL16_X: [f64; 16] = [
    -0.9894009349916499326,
    -0.9445750230732325761,
    -0.8656312023878317439,
    -0.7554044083550030339,
    -0.6178762444026437484,
    -0.4580167776572273863,
    -0.2816035507792589132,
    -0.0950125098376374402,
    0.0950125098376374402,
    0.2816035507792589132,
    0.4580167776572273863,
    0.6178762444026437484,
    0.7554044083550030339,
    0.8656312023878317439,
    0.9445750230732325761,
    0.9894009349916499326,
];
const GL16_W: [f64; 16] = [
    0.0271524594117540949,
    0.0622535239386478929,
    0.0951585116824927848,
    0.1246289712555338721,
    0.1495959888165767321,
    0.1691565193950025382,
    0.1826034150449235889,
    0.1894506104550684963,
    0.1894506104550684963,
    0.1826034150449235889,
    0.1691565193950025382,
    0.1495959888165767321,
    0.1246289712555338721,
    0.0951585116824927848,
    0.0622535239386478929,
    0.0271524594117540949,
];

/// Numerical health report for one evaluation (or the worst case over a
/// batch).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    /// Minimum |det| of the equilibrated systems over all nodes.
    pub min_abs_det: f64,
    /// Safety-factored magnitude of the outermost ray panels' contribution:
    /// an upper estimate of the truncation tail beyond `R + L`.
    pub tail_estimate: f64,
    /// `eps * sum_i |w_i kappa_i X_i|`: first-order roundoff of the
    /// quadrature sum (dominated by the arc when `R^2 t` is large).
    pub roundoff_estimate: f64,
    /// Largest imaginary part left in any channel after the `1/(i pi)`
    /// normalization; the exact map is real, so this measures quadrature
    /// error directly.
    pub imag_residual: f64,
    /// Number of contour nodes used.
    pub node_count: usize,
}

impl TraceDiagnostics {
    fn merge_worst(&mut self, other: &TraceDiagnostics) {
        self.min_abs_det = self.min_abs_det.min(other.min_abs_det);
        self.tail_estimate = self.tail_estimate.max(other.tail_estimate);
        self.roundoff_estimate = self.roundoff_estimate.max(other.roundoff_estimate);
        self.imag_residual = self.imag_residual.max(other.imag_residual);
        self.node_count = self.node_count.max(other.node_count);
    }
}

/// Interface values at a single time.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    /// `(point index, position)` per reported point: the interfaces
    /// `1..=n`, for the whole line and the interval alike.
    pub points: Vec<(usize, f64)>,
    /// Temperature at each point.
    pub u: Vec<f64>,
    /// One-sided spatial derivative (from the layer left of the point; the
    /// left boundary uses layer 1).
    pub ux: Vec<f64>,
    /// `sigma_left^2 * ux` at each point.
    pub flux: Vec<f64>,
    pub diagnostics: TraceDiagnostics,
}

/// Time series of interface values: one channel per tracked point, one
/// entry per time. Spectral traces carry the interfaces `1..=n`; the FD
/// oracle's traces additionally carry the interval's boundary points `0`
/// and `n+1`, which it knows legitimately from its marched field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterfaceTrace {
    pub times: Vec<f64>,
    pub channels: Vec<TraceChannel>,
    /// Worst case over the per-time evaluations.
    pub diagnostics: TraceDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceChannel {
    /// Index of the point (interfaces are 1-based; index 0 and n+1 denote
    /// the interval's boundary points where a producer tracks them).
    pub index: usize,
    /// Position in the caller's original (pre-normalization) coordinates.
    pub position: f64,
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub flux: Vec<f64>,
}

impl InterfaceTrace {
    /// Channel count (interfaces plus boundary points, if any).
    pub fn width(&self) -> usize {
        self.channels.len()
    }
}

/// Evaluate the whole-line map at one time.
pub fn evaluate_infinite(
    domain: &CompositeDomain,
    u0: &InitialData,
    spec: &ContourSpec,
    t: f64,
) -> Result<TraceRow> {
    let problem = Problem::infinite(domain.clone(), u0.clone());
    evaluate(&problem, spec, t)
}

/// Evaluate the finite-interval map at one time. The returned row carries
/// the interior interfaces `1..=n`; the boundary columns of the interval
/// system are outside the map's range (see the note in [`evaluate`]) and
/// are recovered through the outer-layer BVPs when needed.
pub fn evaluate_finite(
    domain: &CompositeDomain,
    u0: &InitialData,
    bc: &RobinBoundary,
    spec: &ContourSpec,
    t: f64,
) -> Result<TraceRow> {
    let problem = Problem::finite(domain.clone(), u0.clone(), bc.clone());
    evaluate(&problem, spec, t)
}

/// Shared evaluation pipeline; `problem` may be in any coordinates (it is
/// normalized internally, results are reported in the original frame).
pub fn evaluate(problem: &Problem, spec: &ContourSpec, t: f64) -> Result<TraceRow> {
    problem.validate()?;
    spec.validate()?;
    if !(t >= T_MIN) {
        return Err(Error::InvalidInput(vec![format!(
            "/times: t = {t} is below the supported minimum {T_MIN}"
        )]));
    }
    let (norm, shift) = problem.normalized();
    let nodes = spec.nodes();
    let kind = match norm.domain.kind {
        DomainKind::Infinite => SystemKind::Infinite(norm.domain.interface_count()),
        DomainKind::Finite => SystemKind::Finite(norm.domain.interface_count()),
    };
    let pairs = kind.pair_count();

    // Per-node contributions w * kappa * X, evaluated independently (and in
    // parallel when enabled), then reduced strictly in node order so the
    // result is deterministic regardless of thread scheduling.
    let evals = eval_nodes(&norm, &nodes, t)?;

    let mut acc = vec![Complex64::new(0.0, 0.0); 2 * pairs];
    let mut sum_abs = 0.0_f64;
    let mut min_abs_det = f64::INFINITY;
    for ev in &evals {
        for (a, c) in acc.iter_mut().zip(&ev.contrib) {
            *a += c;
        }
        sum_abs += ev.max_abs_contrib;
        min_abs_det = min_abs_det.min(ev.abs_det);
    }

    // Outermost panel of each ray, as laid out by `nodes()`: the first
    // panel overall and the last panel overall.
    let panel = match spec.rule {
        QuadratureRule::GaussLegendre => 16,
        QuadratureRule::Simpson => 17,
    };
    let tail_nodes: f64 = evals
        .iter()
        .take(panel)
        .chain(evals.iter().rev().take(panel))
        .map(|e| e.max_abs_contrib)
        .sum();
    let tail_estimate = 4.0 * tail_nodes;

    // Reported points: the interfaces. The interval system also carries the
    // boundary columns, but the contour inversion that defines the map is
    // exact only for the interface unknowns — applied to a boundary column
    // it returns a delta-slice of the data (a prescribed combination
    // `beta1 u + beta2 u_x = f` comes back as `(1/2 - 2*delta/pi) f`, not
    // `f`), so those columns are never reported. Boundary values of the
    // interval problem are recovered from the outer-layer BVPs instead
    // (see `fd::layerwise_bvp_solve`).
    let keep = match kind {
        SystemKind::Infinite(n) => 0..n,
        SystemKind::Finite(n) => 1..n + 1,
    };

    let inv_ipi = Complex64::new(0.0, -std::f64::consts::FRAC_1_PI); // 1/(i pi)
    let mut u = Vec::with_capacity(keep.len());
    let mut ux = Vec::with_capacity(keep.len());
    let mut imag_residual = 0.0_f64;
    for j in keep.clone() {
        let vu = acc[j] * inv_ipi;
        let vx = acc[pairs + j] * inv_ipi;
        imag_residual = imag_residual.max(vu.im.abs()).max(vx.im.abs());
        u.push(vu.re);
        ux.push(vx.re);
    }

    let all_points = norm.trace_positions();
    debug_assert_eq!(all_points.len(), pairs);
    let points: Vec<(usize, f64)> = all_points[keep]
        .iter()
        .map(|&(idx, x)| (idx, x - shift))
        .collect();
    let flux: Vec<f64> = points
        .iter()
        .zip(&ux)
        .map(|(&(idx, _), &uxj)| {
            let s = norm.domain.sigma_left_of(idx.max(1));
            s * s * uxj
        })
        .collect();

    Ok(TraceRow {
        t,
        points,
        u,
        ux,
        flux,
        diagnostics: TraceDiagnostics {
            min_abs_det,
            tail_estimate,
            roundoff_estimate: f64::EPSILON * sum_abs,
            imag_residual,
            node_count: nodes.len(),
        },
    })
}

struct NodeEval {
    contrib: Vec<Complex64>,
    abs_det: f64,
    max_abs_contrib: f64,
}

fn eval_one_node(
    norm: &Problem,
    kappa: Complex64,
    weight: Complex64,
    t: f64,
) -> Result<NodeEval> {
    let node = SpectralPoint::new(kappa);
    let mut system = match norm.domain.kind {
        DomainKind::Infinite => build_infinite(&norm.domain, &norm.initial, node, t)?,
        DomainKind::Finite => build_finite(
            &norm.domain,
            &norm.initial,
            norm.boundary.as_ref().expect("validated finite problem"),
            node,
            t,
        )?,
    };
    equilibrate(&mut system)?;
    let abs_det = lu_factor(&system.matrix, kappa)?.det().norm();
    let sol = solve_node(&system)?;
    let wk = weight * kappa;
    let mut contrib = Vec::with_capacity(sol.g0.len() + sol.g1.len());
    contrib.extend(sol.g0.iter().map(|g| wk * g));
    contrib.extend(sol.g1.iter().map(|g| wk * g));
    let max_abs_contrib = contrib.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(NodeEval {
        contrib,
        abs_det,
        max_abs_contrib,
    })
}

#[cfg(feature = "parallel")]
fn eval_nodes(norm: &Problem, nodes: &[(Complex64, Complex64)], t: f64) -> Result<Vec<NodeEval>> {
    nodes
        .par_iter()
        .map(|&(kappa, w)| eval_one_node(norm, kappa, w, t))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn eval_nodes(norm: &Problem, nodes: &[(Complex64, Complex64)], t: f64) -> Result<Vec<NodeEval>> {
    nodes
        .iter()
        .map(|&(kappa, w)| eval_one_node(norm, kappa, w, t))
        .collect()
}

/// Batch evaluation over a time grid. Fails on the first failing time,
/// wrapping the cause with its index in `times`.
pub fn trace(
    domain: &CompositeDomain,
    u0: &InitialData,
    bc: Option<&RobinBoundary>,
    spec: &ContourSpec,
    times: &[f64],
) -> Result<InterfaceTrace> {
    let problem = match bc {
        Some(bc) => Problem::finite(domain.clone(), u0.clone(), bc.clone()),
        None => Problem::infinite(domain.clone(), u0.clone()),
    };
    let mut rows = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let row = evaluate(&problem, spec, t).map_err(|e| Error::TimeStep {
            index: i,
            t,
            source: Box::new(e),
        })?;
        rows.push(row);
    }
    Ok(collect_rows(times, rows))
}

fn collect_rows(times: &[f64], rows: Vec<TraceRow>) -> InterfaceTrace {
    let mut diagnostics = TraceDiagnostics {
        min_abs_det: f64::INFINITY,
        ..TraceDiagnostics::default()
    };
    let mut channels: Vec<TraceChannel> = rows
        .first()
        .map(|row| {
            row.points
                .iter()
                .map(|&(index, position)| TraceChannel {
                    index,
                    position,
                    u: Vec::with_capacity(times.len()),
                    ux: Vec::with_capacity(times.len()),
                    flux: Vec::with_capacity(times.len()),
                })
                .collect()
        })
        .unwrap_or_default();
    for row in &rows {
        diagnostics.merge_worst(&row.diagnostics);
        for (c, j) in channels.iter_mut().zip(0..) {
            c.u.push(row.u[j]);
            c.ux.push(row.ux[j]);
            c.flux.push(row.flux[j]);
        }
    }
    InterfaceTrace {
        times: times.to_vec(),
        channels,
        diagnostics,
    }
}

/// Enlarge the radius (doubling, factor cap [`ADAPT_R_CAP`]) until the
/// determinant scan clears [`DET_THRESHOLD`]; the other contour parameters
/// are unchanged. Errors if the cap is reached without certification.
pub fn adapt_r(
    domain: &CompositeDomain,
    bc: Option<&RobinBoundary>,
    spec: &ContourSpec,
) -> Result<ContourSpec> {
    let (norm, _) = match bc {
        Some(bc) => Problem::finite(
            domain.clone(),
            InitialData::zero(domain.layer_count()),
            bc.clone(),
        ),
        None => Problem::infinite(domain.clone(), InitialData::zero(domain.layer_count())),
    }
    .normalized();
    let mut current = *spec;
    loop {
        let nodes: Vec<SpectralPoint> = current
            .nodes()
            .into_iter()
            .map(|(kappa, _)| SpectralPoint::new(kappa))
            .collect();
        let (min_det, at) = det_scan(&norm.domain, norm.boundary.as_ref(), &nodes)?;
        if min_det > DET_THRESHOLD {
            return Ok(current);
        }
        if current.r >= ADAPT_R_CAP * spec.r {
            return Err(Error::PoleProximity {
                kappa: at,
                min_abs: min_det,
                detail: format!(
                    "cannot certify a pole-free contour: |det| = {min_det:.3e} persists up to R = {}",
                    current.r
                ),
            });
        }
        current.r *= 2.0;
    }
}
