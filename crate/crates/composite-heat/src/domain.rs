//! Problem description: layered domains, piecewise-polynomial initial data,
//! Robin boundary data.
//!
//! A domain with `n` interior interfaces has `n + 1` layers numbered
//! `1..=n+1` from left to right. Layer `j` has diffusivity coefficient
//! `sigma_j^2` (the PDE in layer `j` is `u_t = sigma_j^2 u_xx`), and the
//! matching conditions at interface `x_j` are continuity of `u` and of the
//! flux `sigma^2 u_x`.
//!
//! * Infinite domains store the `n` interface positions; layer 1 extends to
//!   `-inf` and layer `n+1` to `+inf`.
//! * Finite domains store `n + 2` breakpoints `x_0 < x_1 < ... < x_{n+1}`;
//!   Robin conditions hold at `x_0` and `x_{n+1}`.
//!
//! All spectral machinery assumes the normalized frame (`x_1 = 0` infinite,
//! `x_0 = 0` finite); [`Problem::normalized`] produces it and reports the
//! shift so results can be presented in the original coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest polynomial degree accepted for a single initial-data piece.
pub const MAX_POLY_DEGREE: usize = 12;

/// Whether the composite domain is the whole line or a bounded interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Infinite,
    Finite,
}

/// A layered one-dimensional domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeDomain {
    pub kind: DomainKind,
    /// Interface positions. Infinite: the `n` interior interfaces.
    /// Finite: `n + 2` values including both outer boundaries.
    pub breakpoints: Vec<f64>,
    /// One `sigma_j > 0` per layer (`n + 1` entries).
    pub sigmas: Vec<f64>,
}

impl CompositeDomain {
    pub fn infinite(breakpoints: Vec<f64>, sigmas: Vec<f64>) -> Self {
        CompositeDomain {
            kind: DomainKind::Infinite,
            breakpoints,
            sigmas,
        }
    }

    pub fn finite(breakpoints: Vec<f64>, sigmas: Vec<f64>) -> Self {
        CompositeDomain {
            kind: DomainKind::Finite,
            breakpoints,
            sigmas,
        }
    }

    /// Number of interior interfaces `n`.
    pub fn interface_count(&self) -> usize {
        match self.kind {
            DomainKind::Infinite => self.breakpoints.len(),
            DomainKind::Finite => self.breakpoints.len().saturating_sub(2),
        }
    }

    /// Number of layers `n + 1`.
    pub fn layer_count(&self) -> usize {
        self.interface_count() + 1
    }

    /// Positions of the interior interfaces `x_1..x_n`.
    pub fn interface_positions(&self) -> &[f64] {
        match self.kind {
            DomainKind::Infinite => &self.breakpoints,
            DomainKind::Finite => {
                let m = self.breakpoints.len();
                &self.breakpoints[1..m - 1]
            }
        }
    }

    /// Closed extent of layer `j` (1-based); unbounded ends are `±inf`.
    pub fn layer_interval(&self, j: usize) -> (f64, f64) {
        debug_assert!(j >= 1 && j <= self.layer_count());
        match self.kind {
            DomainKind::Infinite => {
                let n = self.breakpoints.len();
                let lo = if j == 1 {
                    f64::NEG_INFINITY
                } else {
                    self.breakpoints[j - 2]
                };
                let hi = if j == n + 1 {
                    f64::INFINITY
                } else {
                    self.breakpoints[j - 1]
                };
                (lo, hi)
            }
            DomainKind::Finite => (self.breakpoints[j - 1], self.breakpoints[j]),
        }
    }

    /// `sigma` of the layer immediately left of interface `j` (1-based).
    pub fn sigma_left_of(&self, j: usize) -> f64 {
        self.sigmas[j - 1]
    }

    /// Largest adjacent-layer ratio `max(sigma_j/sigma_{j+1}, sigma_{j+1}/sigma_j)`.
    pub fn max_sigma_ratio(&self) -> f64 {
        self.sigmas
            .windows(2)
            .map(|w| (w[0] / w[1]).max(w[1] / w[0]))
            .fold(1.0, f64::max)
    }
}

/// One polynomial piece of initial data: `p(x) = sum coeffs[m] x^m` on
/// the closed support `[a, b]`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyPiece {
    /// Support `(a, b)` with `a < b`.
    pub support: (f64, f64),
    /// Coefficients in increasing power order; degree = `coeffs.len() - 1`.
    pub coeffs: Vec<f64>,
}

impl PolyPiece {
    pub fn new(a: f64, b: f64, coeffs: Vec<f64>) -> Self {
        PolyPiece {
            support: (a, b),
            coeffs,
        }
    }

    /// Constant-one indicator of `[a, b]`.
    pub fn indicator(a: f64, b: f64) -> Self {
        PolyPiece::new(a, b, vec![1.0])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn width(&self) -> f64 {
        self.support.1 - self.support.0
    }

    /// Evaluate the polynomial (ignores the support window).
    pub fn eval_poly(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Evaluate as initial data: zero outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            0.0
        } else {
            self.eval_poly(x)
        }
    }

    /// The same data expressed in coordinates shifted by `dx`
    /// (`q(y) = p(y - dx)` on `[a + dx, b + dx]`).
    pub fn shifted(&self, dx: f64) -> PolyPiece {
        let deg = self.degree();
        let mut out = vec![0.0; deg + 1];
        // p(y - dx) = sum_m c_m (y - dx)^m, expanded by the binomial theorem.
        for (m, &c) in self.coeffs.iter().enumerate() {
            let mut binom = 1.0; // C(m, i)
            let mut pow = (-dx).powi(m as i32); // (-dx)^(m-i)
            for i in 0..=m {
                out[i] += c * binom * pow;
                binom *= (m - i) as f64 / (i + 1) as f64;
                if dx != 0.0 {
                    pow /= -dx;
                } else {
                    pow = if i + 1 == m { 1.0 } else { 0.0 };
                }
            }
        }
        PolyPiece {
            support: (self.support.0 + dx, self.support.1 + dx),
            coeffs: out,
        }
    }
}

/// Initial temperature: for each layer, a list of non-overlapping pieces.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialData {
    /// `layers[j - 1]` holds the pieces supported inside layer `j`.
    pub layers: Vec<Vec<PolyPiece>>,
}

impl InitialData {
    pub fn new(layers: Vec<Vec<PolyPiece>>) -> Self {
        InitialData { layers }
    }

    /// All-zero data for a domain with `layer_count` layers.
    pub fn zero(layer_count: usize) -> Self {
        InitialData {
            layers: vec![Vec::new(); layer_count],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.is_empty())
    }

    /// Evaluate the data of layer `j` (1-based) at `x`.
    pub fn eval_layer(&self, j: usize, x: f64) -> f64 {
        self.layers[j - 1].iter().map(|p| p.eval(x)).sum()
    }

    pub fn shifted(&self, dx: f64) -> InitialData {
        InitialData {
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(|p| p.shifted(dx)).collect())
                .collect(),
        }
    }

    /// Sup of |p| over all pieces, estimated on a dense sample per piece.
    pub fn sup_norm_estimate(&self) -> f64 {
        let mut m: f64 = 0.0;
        for piece in self.layers.iter().flatten() {
            let (a, b) = piece.support;
            for i in 0..=64 {
                let x = a + (b - a) * i as f64 / 64.0;
                m = m.max(piece.eval_poly(x).abs());
            }
        }
        m
    }

    /// Largest |support endpoint| over all pieces (0 if no pieces).
    pub fn support_radius(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|p| p.support.0.abs().max(p.support.1.abs()))
            .fold(0.0, f64::max)
    }
}

/// Boundary forcing signal; piecewise-constant in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeSignal {
    Zero,
    Constant {
        value: f64,
    },
    /// `values[i]` holds on `[breaks[i], breaks[i+1])`; the last value
    /// extends to infinity. `breaks[0]` must be 0.
    Piecewise {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TimeSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeSignal::Zero => 0.0,
            TimeSignal::Constant { value } => *value,
            TimeSignal::Piecewise { breaks, values } => {
                let mut v = values[0];
                for (i, &b) in breaks.iter().enumerate() {
                    if t >= b {
                        v = values[i];
                    } else {
                        break;
                    }
                }
                v
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeSignal::Zero => true,
            TimeSignal::Constant { value } => *value == 0.0,
            TimeSignal::Piecewise { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// Sup of |f| over all segments.
    pub fn sup_norm(&self) -> f64 {
        match self {
            TimeSignal::Zero => 0.0,
            TimeSignal::Constant { value } => value.abs(),
            TimeSignal::Piecewise { values, .. } => {
                values.iter().fold(0.0, |m: f64, &v| m.max(v.abs()))
            }
        }
    }

    /// Exact `int_a^b f(s) ds` (the signal is piecewise constant, so no
    /// quadrature is involved). Time steppers that use this instead of
    /// endpoint sampling stay second order across signal breaks.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            TimeSignal::Zero => 0.0,
            TimeSignal::Constant { value } => value * (b - a),
            TimeSignal::Piecewise { breaks, values } => {
                let mut acc = 0.0;
                for (i, &v) in values.iter().enumerate() {
                    let lo = breaks[i].max(a);
                    let hi = if i + 1 < breaks.len() {
                        breaks[i + 1].min(b)
                    } else {
                        b
                    };
                    if hi > lo {
                        acc += v * (hi - lo);
                    }
                }
                acc
            }
        }
    }

    /// Interior discontinuity locations inside `(0, horizon)`, for steppers
    /// that want to land a step boundary on every break.
    pub fn breaks_within(&self, horizon: f64) -> Vec<f64> {
        match self {
            TimeSignal::Piecewise { breaks, .. } => breaks
                .iter()
                .copied()
                .filter(|&b| b > 0.0 && b < horizon)
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Robin data for a finite domain:
/// `beta1 u + beta2 u_x = f_left(t)` at `x_0`,
/// `beta3 u + beta4 u_x = f_right(t)` at `x_{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobinBoundary {
    pub beta: [f64; 4],
    pub f_left: TimeSignal,
    pub f_right: TimeSignal,
}

impl RobinBoundary {
    pub fn neumann(f_left: TimeSignal, f_right: TimeSignal) -> Self {
        RobinBoundary {
            beta: [0.0, 1.0, 0.0, 1.0],
            f_left,
            f_right,
        }
    }

    pub fn dirichlet(f_left: TimeSignal, f_right: TimeSignal) -> Self {
        RobinBoundary {
            beta: [1.0, 0.0, 1.0, 0.0],
            f_left,
            f_right,
        }
    }

    /// True when both conditions are pure Neumann (`beta = (0,1,0,1)` up to
    /// scaling of each pair).
    pub fn is_neumann(&self) -> bool {
        self.beta[0] == 0.0 && self.beta[1] != 0.0 && self.beta[2] == 0.0 && self.beta[3] != 0.0
    }
}

/// A complete problem statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub domain: CompositeDomain,
    pub initial: InitialData,
    /// Required for finite domains, absent for infinite ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<RobinBoundary>,
}

impl Problem {
    pub fn infinite(domain: CompositeDomain, initial: InitialData) -> Self {
        Problem {
            domain,
            initial,
            boundary: None,
        }
    }

    pub fn finite(domain: CompositeDomain, initial: InitialData, bc: RobinBoundary) -> Self {
        Problem {
            domain,
            initial,
            boundary: Some(bc),
        }
    }

    /// Check every structural invariant, collecting all violations
    /// (JSON-pointer-style paths) instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let d = &self.domain;

        match d.kind {
            DomainKind::Infinite => {
                if d.breakpoints.is_empty() {
                    bad.push(
                        "/domain/breakpoints: infinite domain needs at least one interface".into(),
                    );
                }
                if self.boundary.is_some() {
                    bad.push("/boundary: infinite domain takes no boundary data".into());
                }
            }
            DomainKind::Finite => {
                if d.breakpoints.len() < 2 {
                    bad.push(
                        "/domain/breakpoints: finite domain needs at least two breakpoints".into(),
                    );
                }
                if self.boundary.is_none() {
                    bad.push("/boundary: finite domain requires Robin boundary data".into());
                }
            }
        }
        for (i, w) in d.breakpoints.windows(2).enumerate() {
            if !(w[0] < w[1]) {
                bad.push(format!(
                    "/domain/breakpoints/{}: must be strictly increasing",
                    i + 1
                ));
            }
        }
        for (i, &x) in d.breakpoints.iter().enumerate() {
            if !x.is_finite() {
                bad.push(format!("/domain/breakpoints/{i}: must be finite"));
            }
        }
        if d.sigmas.len() != d.layer_count() && !d.breakpoints.is_empty() {
            bad.push(format!(
                "/domain/sigmas: expected {} entries (one per layer), got {}",
                d.layer_count(),
                d.sigmas.len()
            ));
        }
        for (i, &s) in d.sigmas.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                bad.push(format!("/domain/sigmas/{i}: must be positive"));
            }
        }

        if self.initial.layers.len() != d.layer_count() && !d.breakpoints.is_empty() {
            bad.push(format!(
                "/initial/layers: expected {} layers, got {}",
                d.layer_count(),
                self.initial.layers.len()
            ));
        }
        let nl = self.initial.layers.len().min(d.layer_count());
        for j in 1..=nl {
            let (lo, hi) = d.layer_interval(j);
            let pieces = &self.initial.layers[j - 1];
            for (i, p) in pieces.iter().enumerate() {
                let path = format!("/initial/layers/{}/{}", j - 1, i);
                let (a, b) = p.support;
                if !(a < b) {
                    bad.push(format!("{path}/support: needs a < b"));
                }
                if a < lo - 1e-12 || b > hi + 1e-12 {
                    bad.push(format!(
                        "{path}/support: [{a}, {b}] leaves layer {j} = [{lo}, {hi}]"
                    ));
                }
                if p.coeffs.is_empty() {
                    bad.push(format!("{path}/coeffs: empty"));
                }
                if p.degree() > MAX_POLY_DEGREE {
                    bad.push(format!(
                        "{path}/coeffs: degree {} exceeds cap {MAX_POLY_DEGREE}",
                        p.degree()
                    ));
                }
                if p.coeffs.iter().any(|c| !c.is_finite()) {
                    bad.push(format!("{path}/coeffs: must be finite"));
                }
                for (i2, q) in pieces.iter().enumerate().skip(i + 1) {
                    if p.support.0 < q.support.1 && q.support.0 < p.support.1 {
                        bad.push(format!(
                            "{path}/support: overlaps /initial/layers/{}/{}",
                            j - 1,
                            i2
                        ));
                    }
                }
            }
        }

        if let Some(bc) = &self.boundary {
            if bc.beta[0] == 0.0 && bc.beta[1] == 0.0 {
                bad.push("/boundary/beta: (beta1, beta2) must not both vanish".into());
            }
            if bc.beta[2] == 0.0 && bc.beta[3] == 0.0 {
                bad.push("/boundary/beta: (beta3, beta4) must not both vanish".into());
            }
            if bc.beta.iter().any(|b| !b.is_finite()) {
                bad.push("/boundary/beta: must be finite".into());
            }
            for (side, f) in [("f_left", &bc.f_left), ("f_right", &bc.f_right)] {
                if let TimeSignal::Piecewise { breaks, values } = f {
                    if breaks.is_empty() || breaks[0] != 0.0 {
                        bad.push(format!("/boundary/{side}/breaks: must start at 0"));
                    }
                    if breaks.len() != values.len() {
                        bad.push(format!(
                            "/boundary/{side}: breaks and values must have equal length"
                        ));
                    }
                    for (i, w) in breaks.windows(2).enumerate() {
                        if !(w[0] < w[1]) {
                            bad.push(format!(
                                "/boundary/{side}/breaks/{}: must be strictly increasing",
                                i + 1
                            ));
                        }
                    }
                    if values.iter().any(|v| !v.is_finite()) {
                        bad.push(format!("/boundary/{side}/values: must be finite"));
                    }
                }
            }
        }

        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(bad))
        }
    }

    /// Shift coordinates so the reference breakpoint sits at the origin
    /// (`x_1 = 0` infinite, `x_0 = 0` finite). Returns the shifted problem
    /// and the applied shift (`x_new = x_old + shift`); idempotent.
    pub fn normalized(&self) -> (Problem, f64) {
        let anchor = match self.domain.kind {
            DomainKind::Infinite => self.domain.breakpoints.first().copied().unwrap_or(0.0),
            DomainKind::Finite => self.domain.breakpoints.first().copied().unwrap_or(0.0),
        };
        let shift = -anchor;
        if shift == 0.0 {
            return (self.clone(), 0.0);
        }
        let mut d = self.domain.clone();
        for x in &mut d.breakpoints {
            *x += shift;
        }
        (
            Problem {
                domain: d,
                initial: self.initial.shifted(shift),
                boundary: self.boundary.clone(),
            },
            shift,
        )
    }

    /// Interface/boundary positions reported in a trace, in problem order:
    /// finite domains include `x_0` first and `x_{n+1}` last.
    pub fn trace_positions(&self) -> Vec<(usize, f64)> {
        match self.domain.kind {
            DomainKind::Infinite => self
                .domain
                .breakpoints
                .iter()
                .enumerate()
                .map(|(i, &x)| (i + 1, x))
                .collect(),
            DomainKind::Finite => self
                .domain
                .breakpoints
                .iter()
                .enumerate()
                .map(|(i, &x)| (i, x))
                .collect(),
        }
    }
}
