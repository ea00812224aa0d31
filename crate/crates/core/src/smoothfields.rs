//! Smoothed set-probability fields and the adaptive selectors driven by
//! their derivatives.
//!
//! The field of interest is
//!
//! ```text
//! h(x) = P(x + rν + bZ ∈ A'),   ν ~ g_1,  Z ~ N(0, 1)
//! ```
//!
//! for an interval union `A'`. The inner Gaussian probability is a finite sum
//! of normal CDF differences; the `ν`-average uses the piecewise-polynomial
//! structure of `g_r` (Gauss–Legendre on each of its three pieces). Either
//! smoothing may be absent, but not both.

use serde::{Deserialize, Serialize};

use crate::kernels::CompactKernel;
use crate::quadrature::GaussLegendre;
use crate::rules::StepRule;
use crate::scenario::MomentEnvelope;
use crate::special::{normal_cdf, normal_pdf};

/// Default `ρ₀` in the smoothing budget.
pub const RHO0: f64 = 0.001;
const NU_PIECE_ORDER: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("invalid interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("field needs a positive smoothing radius or gaussian scale")]
    NotSmooth,
    #[error("argument out of range: {0}")]
    Argument(String),
}

/// Finite union of disjoint closed intervals, sorted. Endpoints may be
/// infinite (`(−∞, 0]`, `ℝ`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct IntervalUnionSet {
    intervals: Vec<(f64, f64)>,
}

impl TryFrom<Vec<[f64; 2]>> for IntervalUnionSet {
    type Error = FieldError;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<IntervalUnionSet> for Vec<[f64; 2]> {
    fn from(s: IntervalUnionSet) -> Self {
        s.intervals.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

impl IntervalUnionSet {
    /// Sorts and merges overlapping or touching intervals.
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self, FieldError> {
        for &(a, b) in &intervals {
            if a.is_nan() || b.is_nan() || a > b || a == f64::INFINITY || b == f64::NEG_INFINITY {
                return Err(FieldError::BadInterval(a, b));
            }
        }
        intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("not NaN"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Ok(Self { intervals: merged })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn real_line() -> Self {
        Self {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Closed `eps`-enlargement; overlapping pieces are merged.
    pub fn enlarge(&self, eps: f64) -> Self {
        Self::new(self.intervals.iter().map(|&(a, b)| (a - eps, b + eps)).collect())
            .expect("enlargement of a valid set is valid")
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| x >= a && x <= b)
    }

    pub fn distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| {
                if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.intervals
            .iter()
            .all(|&(a, b)| other.intervals.iter().any(|&(c, d)| c <= a && b <= d))
    }

    /// `P(mean + sd·Z ∈ self)`.
    pub fn gaussian_probability(&self, mean: f64, sd: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| normal_cdf((b - mean) / sd) - normal_cdf((a - mean) / sd))
            .sum()
    }

    pub fn finite_endpoints(&self) -> Vec<f64> {
        self.intervals
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .filter(|x| x.is_finite())
            .collect()
    }
}

/// `h`, `h'`, `h''` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEval {
    pub h: f64,
    pub d1: f64,
    pub d2: f64,
}

/// A twice-differentiable scalar field with derivative evaluators.
pub trait SmoothField: Sync {
    fn eval(&self, x: f64) -> FieldEval;

    fn value(&self, x: f64) -> f64 {
        self.eval(x).h
    }
}

/// Construction parameters recorded on a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub eps: f64,
    pub k: usize,
    pub n: usize,
}

/// `h(x) = P(x + rν + bZ ∈ A')` for a fixed interval union `A'`.
#[derive(Debug, Clone)]
pub struct SmoothedIndicatorField {
    target: IntervalUnionSet,
    kernel: Option<CompactKernel<f64>>,
    gauss_scale: Option<f64>,
    rule: GaussLegendre<f64>,
    meta: Option<FieldMeta>,
}

impl SmoothedIndicatorField {
    /// General constructor: `nu_radius = r` (density `g_r`), `gauss_scale = b`.
    pub fn new(
        target: IntervalUnionSet,
        nu_radius: Option<f64>,
        gauss_scale: Option<f64>,
    ) -> Result<Self, FieldError> {
        let kernel = match nu_radius {
            Some(r) if r > 0.0 => Some(CompactKernel::new(r).map_err(|e| FieldError::Argument(e.to_string()))?),
            Some(r) if r < 0.0 || r.is_nan() => {
                return Err(FieldError::Argument(format!("smoothing radius {r}")))
            }
            _ => None,
        };
        let gauss_scale = match gauss_scale {
            Some(b) if b.is_finite() && b != 0.0 => Some(b.abs()),
            Some(0.0) => None,
            Some(b) => return Err(FieldError::Argument(format!("gaussian scale {b}"))),
            None => None,
        };
        if kernel.is_none() && gauss_scale.is_none() {
            return Err(FieldError::NotSmooth);
        }
        Ok(Self {
            target,
            kernel,
            gauss_scale,
            rule: GaussLegendre::new(NU_PIECE_ORDER),
            meta: None,
        })
    }

    /// `h(x) = P(x + bZ ∈ A)`.
    pub fn gaussian(target: IntervalUnionSet, b: f64) -> Result<Self, FieldError> {
        Self::new(target, None, Some(b))
    }

    /// `h(x) = P(x + rν ∈ A)`, `rν` with density `g_r`.
    pub fn compact(target: IntervalUnionSet, r: f64) -> Result<Self, FieldError> {
        Self::new(target, Some(r), None)
    }

    pub fn target(&self) -> &IntervalUnionSet {
        &self.target
    }

    pub fn nu_radius(&self) -> Option<f64> {
        self.kernel.map(|k| k.radius())
    }

    pub fn gauss_scale(&self) -> Option<f64> {
        self.gauss_scale
    }

    pub fn meta(&self) -> Option<FieldMeta> {
        self.meta
    }

    /// Gaussian part `Q(z) = P(z + bZ ∈ A')` and its first two derivatives.
    fn gaussian_part(&self, z: f64, b: f64) -> FieldEval {
        let mut out = FieldEval { h: 0.0, d1: 0.0, d2: 0.0 };
        for &(lo, hi) in self.target.intervals() {
            let (mut ph, mut dh, mut ddh) = (1.0, 0.0, 0.0);
            if hi.is_finite() {
                let u = (hi - z) / b;
                let p = normal_pdf(u);
                ph = normal_cdf(u);
                dh = -p / b;
                ddh = -u * p / (b * b);
            }
            let (mut pl, mut dl, mut ddl) = (0.0, 0.0, 0.0);
            if lo.is_finite() {
                let u = (lo - z) / b;
                let p = normal_pdf(u);
                pl = normal_cdf(u);
                dl = -p / b;
                ddl = -u * p / (b * b);
            }
            out.h += ph - pl;
            out.d1 += dh - dl;
            out.d2 += ddh - ddl;
        }
        out
    }

    /// Pure compact smoothing: `Σ G_r(b_i − x) − G_r(a_i − x)`.
    fn compact_part(&self, x: f64, kernel: &CompactKernel<f64>) -> FieldEval {
        let mut out = FieldEval { h: 0.0, d1: 0.0, d2: 0.0 };
        for &(lo, hi) in self.target.intervals() {
            out.h += kernel.cdf(hi - x) - kernel.cdf(lo - x);
            if hi.is_finite() {
                let e = kernel.eval(hi - x);
                out.d1 -= e.value;
                out.d2 += e.d1;
            }
            if lo.is_finite() {
                let e = kernel.eval(lo - x);
                out.d1 += e.value;
                out.d2 -= e.d1;
            }
        }
        out
    }
}

impl SmoothField for SmoothedIndicatorField {
    fn eval(&self, x: f64) -> FieldEval {
        match (&self.kernel, self.gauss_scale) {
            (None, Some(b)) => self.gaussian_part(x, b),
            (Some(kernel), None) => self.compact_part(x, kernel),
            (Some(kernel), Some(b)) => {
                let r = kernel.radius();
                let knots = kernel.knots();
                let mut out = FieldEval { h: 0.0, d1: 0.0, d2: 0.0 };
                for w in knots.windows(2) {
                    for (u, wt) in self.rule.mapped(w[0], w[1]) {
                        let g = kernel.density(u) * wt;
                        let q = self.gaussian_part(x + u, b);
                        out.h += g * q.h;
                        out.d1 += g * q.d1;
                        out.d2 += g * q.d2;
                    }
                }
                debug_assert!(r > 0.0);
                out
            }
            (None, None) => unreachable!("constructor rejects unsmoothed fields"),
        }
    }
}

/// `h̃_k(x) = P(x + εν/2 + B(1) − B(k/n) ∈ A^{ε/2})`.
///
/// Gaussian scale `b = √(1 − k/n)`; for `k = n` only the `ν`-smoothing
/// remains, for `ε = 0` only the Gaussian.
pub fn smoothed_indicator_field(
    a: &IntervalUnionSet,
    eps: f64,
    k: usize,
    n: usize,
) -> Result<SmoothedIndicatorField, FieldError> {
    if n == 0 || k > n {
        return Err(FieldError::Argument(format!("need 0 <= k <= n, n >= 1 (k = {k}, n = {n})")));
    }
    if !(eps >= 0.0) {
        return Err(FieldError::Argument(format!("eps must be nonnegative, got {eps}")));
    }
    let b = (1.0 - k as f64 / n as f64).max(0.0).sqrt();
    let r = eps / 2.0;
    let mut field = SmoothedIndicatorField::new(
        a.enlarge(r),
        (r > 0.0).then_some(r),
        (b > 0.0).then_some(b),
    )?;
    field.meta = Some(FieldMeta { eps, k, n });
    Ok(field)
}

/// `(ϰ, κ, ρ₀)` for the selectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub rho0: f64,
}

impl SelectorParams {
    pub fn new(kappa1: f64, kappa2: f64) -> Result<Self, FieldError> {
        if !(kappa1 > 0.0) || !(kappa2 > 0.0) {
            return Err(FieldError::Argument(format!(
                "selector parameters must be positive, got ({kappa1}, {kappa2})"
            )));
        }
        Ok(Self {
            kappa1,
            kappa2,
            rho0: RHO0,
        })
    }

    /// Left side of the smoothing budget inequality.
    pub fn budget_used(&self, n: usize, env: &MomentEnvelope) -> f64 {
        let nf = n as f64;
        self.kappa1 * (env.mu_high - env.mu_low) / (2.0 * nf.sqrt() * env.sigma_low)
            + self.kappa2 / (2.0 * nf) * (env.variance_ratio() - 1.0)
    }
}

/// Drift selector from a slope value: clipped-linear in `h'/ϰ`.
pub fn alpha_from_slope(d1: f64, params: &SelectorParams, env: &MomentEnvelope) -> f64 {
    let (lo, hi) = (env.mu_low, env.mu_high);
    if d1 > params.kappa1 {
        hi
    } else if d1 < -params.kappa1 {
        lo
    } else {
        let mid = 0.5 * (hi + lo);
        (mid + 0.5 * (hi - lo) * d1 / params.kappa1).clamp(lo, hi)
    }
}

/// Volatility selector from slope and curvature; returns `β` (not `β²`).
pub fn beta_from_derivatives(d1: f64, d2: f64, params: &SelectorParams, env: &MomentEnvelope) -> f64 {
    let alpha = alpha_from_slope(d1, params, env);
    let lo2 = env.sigma_low_at(alpha).powi(2);
    let hi2 = env.sigma_high_at(alpha).powi(2);
    let beta2 = if d2 > params.kappa2 {
        hi2
    } else if d2 < -params.kappa2 {
        lo2
    } else {
        (0.5 * (hi2 + lo2) + 0.5 * (hi2 - lo2) * d2 / params.kappa2).clamp(lo2, hi2)
    };
    beta2.sqrt()
}

pub fn alpha_selector<F: SmoothField + ?Sized>(
    field: &F,
    x: f64,
    params: &SelectorParams,
    env: &MomentEnvelope,
) -> f64 {
    alpha_from_slope(field.eval(x).d1, params, env)
}

pub fn beta_selector<F: SmoothField + ?Sized>(
    field: &F,
    x: f64,
    params: &SelectorParams,
    env: &MomentEnvelope,
) -> f64 {
    let e = field.eval(x);
    beta_from_derivatives(e.d1, e.d2, params, env)
}

/// `δ(x, y | h) = h(x + y) − h(x) − y h'(x) − y² h''(x)/2`.
pub fn taylor_error_field<F: SmoothField + ?Sized>(field: &F, x: f64, y: f64) -> f64 {
    let e = field.eval(x);
    field.value(x + y) - e.h - y * e.d1 - y * y * e.d2 / 2.0
}

/// Chooses `(ϰ, κ)` so that
/// `ϰ(μ̄−μ̲)/(2√n σ̲) + κ(σ̄²/σ̲² − 1)/(2n) ≤ ρ₀ · delta_floor`,
/// splitting the budget equally between the two addends. A vanishing addend
/// hands its half to the other; if both vanish, `(1, 1)` is returned.
pub fn choose_smoothing_params(
    n: usize,
    env: &MomentEnvelope,
    delta_floor: f64,
) -> Result<SelectorParams, FieldError> {
    choose_smoothing_params_from(
        n,
        env.mu_high - env.mu_low,
        env.sigma_low,
        env.sigma_high,
        delta_floor,
    )
}

pub fn choose_smoothing_params_from(
    n: usize,
    mu_spread: f64,
    sigma_low: f64,
    sigma_high: f64,
    delta_floor: f64,
) -> Result<SelectorParams, FieldError> {
    if !(delta_floor > 0.0) || !delta_floor.is_finite() {
        return Err(FieldError::Argument(format!("delta_floor must be positive, got {delta_floor}")));
    }
    if n == 0 || !(sigma_low > 0.0) || sigma_high < sigma_low || mu_spread < 0.0 {
        return Err(FieldError::Argument("invalid envelope for smoothing budget".into()));
    }
    let nf = n as f64;
    let drift_coef = mu_spread / (2.0 * nf.sqrt() * sigma_low);
    let vol_coef = ((sigma_high / sigma_low).powi(2) - 1.0) / (2.0 * nf);
    let budget = RHO0 * delta_floor;
    let (kappa1, kappa2) = match (drift_coef > 0.0, vol_coef > 0.0) {
        (true, true) => (0.5 * budget / drift_coef, 0.5 * budget / vol_coef),
        (true, false) => (budget / drift_coef, 1.0),
        (false, true) => (1.0, budget / vol_coef),
        (false, false) => (1.0, 1.0),
    };
    SelectorParams::new(kappa1, kappa2)
}

/// The one-dimensional selector wiring: step 1 uses `(μ̲, σ̲(μ̲))`, step
/// `k >= 2` applies the selectors to `h̃_k` at the running sum.
#[derive(Debug, Clone)]
pub struct LindebergRule {
    fields: Vec<SmoothedIndicatorField>,
    params: SelectorParams,
    env: MomentEnvelope,
}

impl LindebergRule {
    pub fn new(
        target: &IntervalUnionSet,
        eps: f64,
        n: usize,
        params: SelectorParams,
        env: MomentEnvelope,
    ) -> Result<Self, FieldError> {
        if !(eps > 0.0) {
            return Err(FieldError::Argument(format!("eps must be positive, got {eps}")));
        }
        let fields = (2..=n)
            .map(|k| smoothed_indicator_field(target, eps, k, n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { fields, params, env })
    }

    pub fn n(&self) -> usize {
        self.fields.len() + 1
    }

    pub fn params(&self) -> &SelectorParams {
        &self.params
    }

    pub fn envelope(&self) -> &MomentEnvelope {
        &self.env
    }

    pub fn field(&self, k: usize) -> Option<&SmoothedIndicatorField> {
        k.checked_sub(2).and_then(|i| self.fields.get(i))
    }
}

impl StepRule for LindebergRule {
    fn step_params(&self, k: usize, w: f64) -> (f64, f64) {
        match self.field(k) {
            None => (self.env.mu_low, self.env.sigma_low_at(self.env.mu_low)),
            Some(field) => {
                let e = field.eval(w);
                (
                    alpha_from_slope(e.d1, &self.params, &self.env),
                    beta_from_derivatives(e.d1, e.d2, &self.params, &self.env),
                )
            }
        }
    }
}

/// `sup_x |δ(x, y | h)|` over a finite grid (a lower estimate of the sup).
pub fn sup_taylor_error_on_grid<F: SmoothField + ?Sized>(field: &F, xs: &[f64], y: f64) -> f64 {
    xs.iter()
        .map(|&x| taylor_error_field(field, x, y).abs())
        .fold(0.0, f64::max)
}

/// Evaluation grid concentrated around the finite endpoints of a set.
pub fn boundary_grid(set: &IntervalUnionSet, half_width: f64, points_per_endpoint: usize) -> Vec<f64> {
    let mut ends = set.finite_endpoints();
    if ends.is_empty() {
        ends.push(0.0);
    }
    let m = points_per_endpoint.max(2);
    let mut xs: Vec<f64> = ends
        .iter()
        .flat_map(|&e| (0..m).map(move |i| e - half_width + 2.0 * half_width * i as f64 / (m - 1) as f64))
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    xs.dedup();
    xs
}

/// `min_{1<=k<=n} E[δ̃_k(Z/√n)]` where `δ̃_k(y)` is the grid sup of the
/// Taylor error of `h̃_k`. The expectation over `Z` uses Gauss–Legendre on
/// `[−8, 8]`.
pub fn expected_taylor_error_floor(
    target: &IntervalUnionSet,
    eps: f64,
    n: usize,
    grid_points_per_endpoint: usize,
    z_order: usize,
) -> Result<f64, FieldError> {
    let rule = GaussLegendre::<f64>::new(z_order.max(2));
    let sqrt_n = (n as f64).sqrt();
    let mut floor = f64::INFINITY;
    for k in 1..=n {
        let field = smoothed_indicator_field(target, eps, k, n)?;
        let half_width = 3.0 * (1.0 - k as f64 / n as f64).sqrt() + eps + 1.0 / sqrt_n;
        let xs = boundary_grid(field.target(), half_width, grid_points_per_endpoint);
        let base: Vec<FieldEval> = xs.iter().map(|&x| field.eval(x)).collect();
        let mut mean = 0.0;
        for (z, w) in rule.mapped(-8.0, 8.0) {
            let y = z / sqrt_n;
            let sup = xs
                .iter()
                .zip(&base)
                .map(|(&x, e)| (field.value(x + y) - e.h - y * e.d1 - y * y * e.d2 / 2.0).abs())
                .fold(0.0, f64::max);
            mean += w * normal_pdf(z) * sup;
        }
        floor = floor.min(mean);
    }
    Ok(floor)
}
