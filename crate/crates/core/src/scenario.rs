//! Sublinear expectations realised as suprema over a finite family of
//! classical one-dimensional laws.
//!
//! For a family `Θ`, `Ê[f(X)] = max_θ E_θ f(X)` and `Ê_low[f] = −Ê[−f]`.
//! This functional is monotone, constant preserving, sub-additive and
//! positively homogeneous. Continuous laws are integrated by Gauss–Legendre
//! on `mean ± 12 sd` (Gaussian) or the exact support (uniform); discrete laws
//! are summed exactly.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::quadrature::GaussLegendre;
use crate::special::normal_pdf;

pub const DEFAULT_QUADRATURE_ORDER: usize = 256;
pub const DEFAULT_MU_GRID: usize = 1024;
/// Half-width of the truncated Gaussian support, in standard deviations.
pub const GAUSSIAN_TRUNCATION_SDS: f64 = 12.0;
const TAIL_TOLERANCE: f64 = 1e-10;
const GOLDEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("scenario family must contain at least one law")]
    EmptyFamily,
    #[error("degenerate family: lower volatility envelope is {0}, must be positive")]
    Degenerate(f64),
    #[error("quadrature did not converge for {law}: {reason}")]
    Quadrature { law: String, reason: String },
    #[error("argument out of range: {0}")]
    Argument(String),
}

/// One classical law in a scenario family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioLaw {
    Gaussian { mean: f64, sd: f64 },
    Uniform { a: f64, b: f64 },
    SymmetricTwoPoint { scale: f64 },
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
}

impl ScenarioLaw {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self, ScenarioError> {
        let law = Self::Gaussian { mean, sd };
        law.validate()?;
        Ok(law)
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self, ScenarioError> {
        let law = Self::Uniform { a, b };
        law.validate()?;
        Ok(law)
    }

    pub fn two_point(scale: f64) -> Result<Self, ScenarioError> {
        let law = Self::SymmetricTwoPoint { scale };
        law.validate()?;
        Ok(law)
    }

    pub fn discrete(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, ScenarioError> {
        let law = Self::Discrete { atoms, weights };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidLaw(m));
        match self {
            Self::Gaussian { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || *sd <= 0.0 {
                    return bad(format!("gaussian needs finite mean and sd > 0, got ({mean}, {sd})"));
                }
            }
            Self::Uniform { a, b } => {
                if !a.is_finite() || !b.is_finite() || b <= a {
                    return bad(format!("uniform needs finite a < b, got [{a}, {b}]"));
                }
            }
            Self::SymmetricTwoPoint { scale } => {
                if !scale.is_finite() || *scale <= 0.0 {
                    return bad(format!("two-point scale must be positive, got {scale}"));
                }
            }
            Self::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return bad("discrete law needs equally many atoms and weights".into());
                }
                if atoms.iter().any(|a| !a.is_finite()) {
                    return bad("discrete atoms must be finite".into());
                }
                if atoms.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("discrete atoms must be strictly increasing".into());
                }
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return bad("discrete weights must be positive".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("discrete weights sum to {total}, not 1"));
                }
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            Self::Gaussian { mean, sd } => format!("N({mean}, {}^2)", sd),
            Self::Uniform { a, b } => format!("U[{a}, {b}]"),
            Self::SymmetricTwoPoint { scale } => format!("±{scale}"),
            Self::Discrete { atoms, .. } => format!("discrete({} atoms)", atoms.len()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::SymmetricTwoPoint { .. } => 0.0,
            Self::Discrete { atoms, weights } => atoms.iter().zip(weights).map(|(a, w)| a * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian { sd, .. } => sd * sd,
            Self::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            Self::SymmetricTwoPoint { scale } => scale * scale,
            Self::Discrete { atoms, weights } => {
                let m = self.mean();
                atoms.iter().zip(weights).map(|(a, w)| w * (a - m) * (a - m)).sum()
            }
        }
    }

    /// `E(X − μ)^2 = Var X + (E X − μ)^2`.
    pub fn second_moment_about(&self, mu: f64) -> f64 {
        let d = self.mean() - mu;
        self.variance() + d * d
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::SymmetricTwoPoint { .. } | Self::Discrete { .. })
    }

    /// Atoms and weights of a discrete law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::SymmetricTwoPoint { scale } => Some(vec![(-scale, 0.5), (*scale, 0.5)]),
            Self::Discrete { atoms, weights } => {
                Some(atoms.iter().copied().zip(weights.iter().copied()).collect())
            }
            _ => None,
        }
    }

    /// Integration interval for continuous laws.
    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Gaussian { mean, sd } => Some((
                mean - GAUSSIAN_TRUNCATION_SDS * sd,
                mean + GAUSSIAN_TRUNCATION_SDS * sd,
            )),
            Self::Uniform { a, b } => Some((*a, *b)),
            _ => None,
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => normal_pdf((x - mean) / sd) / sd,
            Self::Uniform { a, b } if x >= *a && x <= *b => 1.0 / (b - a),
            _ => 0.0,
        }
    }

    /// Quadrature nodes `(x_j, w_j)` with `Σ w_j f(x_j) ≈ E f(X)`.
    pub fn quadrature_nodes(&self, rule: &GaussLegendre<f64>) -> Vec<(f64, f64)> {
        match self.atoms() {
            Some(atoms) => atoms,
            None => {
                let (lo, hi) = self.support().expect("continuous law has support");
                rule.mapped(lo, hi).map(|(x, w)| (x, w * self.pdf(x))).collect()
            }
        }
    }

    /// `E f(X)`, splitting the quadrature at `breaks` (kinks of `f`).
    pub fn expect<F: Fn(f64) -> f64>(
        &self,
        f: F,
        breaks: &[f64],
        rule: &GaussLegendre<f64>,
    ) -> Result<f64, ScenarioError> {
        let value = match self.atoms() {
            Some(atoms) => atoms.iter().map(|&(x, w)| w * f(x)).sum(),
            None => {
                let (lo, hi) = self.support().expect("continuous law has support");
                if let Self::Gaussian { sd, .. } = self {
                    // mass beyond the truncation must be negligible for f
                    let tail = (f(lo).abs() * self.pdf(lo)).max(f(hi).abs() * self.pdf(hi)) * sd;
                    if !(tail <= TAIL_TOLERANCE) {
                        return Err(ScenarioError::Quadrature {
                            law: self.label(),
                            reason: format!(
                                "integrand not controlled by the gaussian tail (tail term {tail:e})"
                            ),
                        });
                    }
                }
                rule.integrate_with_breaks(lo, hi, breaks, |x| f(x) * self.pdf(x))
            }
        };
        if !value.is_finite() {
            return Err(ScenarioError::Quadrature {
                law: self.label(),
                reason: format!("non-finite expectation {value}"),
            });
        }
        Ok(value)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(rng),
            Self::Uniform { a, b } => Uniform::new(*a, *b).expect("validated").sample(rng),
            Self::SymmetricTwoPoint { scale } => {
                if rng.random::<bool>() {
                    *scale
                } else {
                    -scale
                }
            }
            Self::Discrete { atoms, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("nonempty")
            }
        }
    }
}

/// Finite family `Θ` of classical laws with a shared quadrature rule.
#[derive(Debug, Clone)]
pub struct ScenarioFamily {
    laws: Vec<ScenarioLaw>,
    rule: GaussLegendre<f64>,
}

impl ScenarioFamily {
    pub fn new(laws: Vec<ScenarioLaw>) -> Result<Self, ScenarioError> {
        Self::with_quadrature_order(laws, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn with_quadrature_order(laws: Vec<ScenarioLaw>, order: usize) -> Result<Self, ScenarioError> {
        if laws.is_empty() {
            return Err(ScenarioError::EmptyFamily);
        }
        for law in &laws {
            law.validate()?;
        }
        let min_var = laws.iter().map(ScenarioLaw::variance).fold(f64::INFINITY, f64::min);
        if !(min_var > 0.0) {
            return Err(ScenarioError::Degenerate(min_var.max(0.0).sqrt()));
        }
        Ok(Self {
            laws,
            rule: GaussLegendre::new(order.max(2)),
        })
    }

    pub fn laws(&self) -> &[ScenarioLaw] {
        &self.laws
    }

    pub fn rule(&self) -> &GaussLegendre<f64> {
        &self.rule
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    /// Classical expectations `E_θ f` for every law.
    pub fn expectations<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> Result<Vec<f64>, ScenarioError> {
        self.laws.iter().map(|law| law.expect(&f, breaks, &self.rule)).collect()
    }

    pub fn upper_expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64, ScenarioError> {
        self.upper_expectation_with_breaks(f, &[])
    }

    pub fn upper_expectation_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        breaks: &[f64],
    ) -> Result<f64, ScenarioError> {
        Ok(self
            .expectations(f, breaks)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// `−Ê[−f]`, the minimum of the classical expectations.
    pub fn lower_expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64, ScenarioError> {
        self.lower_expectation_with_breaks(f, &[])
    }

    pub fn lower_expectation_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        breaks: &[f64],
    ) -> Result<f64, ScenarioError> {
        Ok(-self.upper_expectation_with_breaks(|x| -f(x), breaks)?)
    }
}

pub fn upper_expectation<F: Fn(f64) -> f64>(f: F, family: &ScenarioFamily) -> Result<f64, ScenarioError> {
    family.upper_expectation(f)
}

pub fn lower_expectation<F: Fn(f64) -> f64>(f: F, family: &ScenarioFamily) -> Result<f64, ScenarioError> {
    family.lower_expectation(f)
}

/// Mean interval `[μ̲, μ̄]`, volatility curves `σ̲(μ)`, `σ̄(μ)` and their
/// extremes `σ̲`, `σ̄` over the mean interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEnvelope {
    pub mu_low: f64,
    pub mu_high: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    /// Per-law `(mean, variance)`; the curves are `√(var + (mean − μ)^2)`.
    moments: Vec<(f64, f64)>,
}

impl MomentEnvelope {
    /// `σ̲(μ) = min_θ √E_θ(X − μ)^2`.
    pub fn sigma_low_at(&self, mu: f64) -> f64 {
        self.moments
            .iter()
            .map(|&(m, v)| (v + (m - mu) * (m - mu)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// `σ̄(μ) = max_θ √E_θ(X − μ)^2`.
    pub fn sigma_high_at(&self, mu: f64) -> f64 {
        self.moments
            .iter()
            .map(|&(m, v)| (v + (m - mu) * (m - mu)).sqrt())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains_mean(&self, mu: f64) -> bool {
        let tol = 1e-12 * (1.0 + self.mu_low.abs().max(self.mu_high.abs()));
        mu >= self.mu_low - tol && mu <= self.mu_high + tol
    }

    /// `σ̄^2/σ̲^2`.
    pub fn variance_ratio(&self) -> f64 {
        (self.sigma_high / self.sigma_low).powi(2)
    }

    pub fn is_single_law_like(&self) -> bool {
        self.mu_low == self.mu_high && self.sigma_low == self.sigma_high
    }
}

/// Builds the envelope of a family. Curve extremes over `[μ̲, μ̄]` are located
/// by a `mu_grid_size`-point scan followed by golden-section refinement.
pub fn moment_envelope(family: &ScenarioFamily, mu_grid_size: usize) -> Result<MomentEnvelope, ScenarioError> {
    let moments: Vec<(f64, f64)> = family.laws().iter().map(|l| (l.mean(), l.variance())).collect();
    let mu_low = moments.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    let mu_high = moments.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    let mut env = MomentEnvelope {
        mu_low,
        mu_high,
        sigma_low: 0.0,
        sigma_high: 0.0,
        moments,
    };
    let (_, low) = grid_refine_max(|mu| -env.sigma_low_at(mu), mu_low, mu_high, mu_grid_size);
    let (_, high) = grid_refine_max(|mu| env.sigma_high_at(mu), mu_low, mu_high, mu_grid_size);
    env.sigma_low = -low;
    env.sigma_high = high;
    if !(env.sigma_low > 0.0) {
        return Err(ScenarioError::Degenerate(env.sigma_low));
    }
    Ok(env)
}

/// Maximises `f` on `[lo, hi]`: grid scan of `grid` points, then golden-section
/// search on the bracket around the best grid point. Returns `(argmax, max)`.
pub fn grid_refine_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid: usize) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let grid = grid.max(2);
    let step = (hi - lo) / (grid - 1) as f64;
    let at = |i: usize| if i + 1 == grid { hi } else { lo + step * i as f64 };
    let (mut best_x, mut best_v) = (lo, f64::NEG_INFINITY);
    let mut best_i = 0;
    for i in 0..grid {
        let x = at(i);
        let v = f(x);
        if v > best_v {
            best_v = v;
            best_x = x;
            best_i = i;
        }
    }
    let a = at(best_i.saturating_sub(1));
    let b = at((best_i + 1).min(grid - 1));
    let (gx, gv) = golden_max(&mut f, a, b);
    if gv > best_v {
        (gx, gv)
    } else {
        (best_x, best_v)
    }
}

fn golden_max<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > GOLDEN_TOLERANCE {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn check_p(p: f64) -> Result<(), ScenarioError> {
    if !(2.0..=3.0).contains(&p) {
        return Err(ScenarioError::Argument(format!("p must lie in [2, 3], got {p}")));
    }
    Ok(())
}

/// `min{|ξ|^p, C^{p−2} ξ^2}`; `C = ∞` gives `|ξ|^p`.
pub fn truncated_power(xi: f64, c: f64, p: f64) -> f64 {
    let a = xi.abs();
    let full = a.powf(p);
    if c.is_infinite() {
        full
    } else {
        full.min(c.powf(p - 2.0) * a * a)
    }
}

/// `γ_p(μ, C) = Ê[|ξ₀(μ)|^p ∧ C^{p−2} ξ₀(μ)^2]` with `ξ₀(μ) = (X − μ)/σ̲(μ)`.
/// `C = +∞` gives the untruncated moment `Ê|ξ₀(μ)|^p`.
pub fn gamma_p(
    family: &ScenarioFamily,
    env: &MomentEnvelope,
    mu: f64,
    c: f64,
    p: f64,
) -> Result<f64, ScenarioError> {
    if !(c > 0.0) {
        return Err(ScenarioError::Argument(format!("truncation level C must be positive, got {c}")));
    }
    check_p(p)?;
    if !env.contains_mean(mu) {
        return Err(ScenarioError::Argument(format!(
            "mu = {mu} outside [{}, {}]",
            env.mu_low, env.mu_high
        )));
    }
    let s = env.sigma_low_at(mu);
    if !(s > 0.0) {
        return Err(ScenarioError::Degenerate(s));
    }
    let mut breaks = vec![mu];
    if c.is_finite() {
        breaks.push(mu - c * s);
        breaks.push(mu + c * s);
    }
    family.upper_expectation_with_breaks(|x| truncated_power((x - mu) / s, c, p), &breaks)
}

/// `γ_p(C) = sup_{μ ∈ [μ̲, μ̄]} γ_p(μ, C)` by grid scan plus refinement.
pub fn gamma_p_sup(
    family: &ScenarioFamily,
    env: &MomentEnvelope,
    c: f64,
    p: f64,
    mu_grid_size: usize,
) -> Result<f64, ScenarioError> {
    // validate once so the closure below cannot fail on arguments
    gamma_p(family, env, env.mu_low, c, p)?;
    let mut err = None;
    let (_, v) = grid_refine_max(
        |mu| match gamma_p(family, env, mu.clamp(env.mu_low, env.mu_high), c, p) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        env.mu_low,
        env.mu_high,
        mu_grid_size,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// The ceiling `C^{p−2} σ̄^2 / σ̲^p` on `γ_p(C)`.
pub fn gamma_p_ceiling(env: &MomentEnvelope, c: f64, p: f64) -> f64 {
    c.powf(p - 2.0) * env.sigma_high * env.sigma_high / env.sigma_low.powf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const E_ABS_Z3: f64 = 1.595_769_121_605_731;

    fn std_family() -> ScenarioFamily {
        ScenarioFamily::new(vec![ScenarioLaw::gaussian(0.0, 1.0).unwrap()]).unwrap()
    }

    fn two_vol() -> ScenarioFamily {
        ScenarioFamily::new(vec![
            ScenarioLaw::gaussian(0.0, 0.8).unwrap(),
            ScenarioLaw::gaussian(0.0, 1.2).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn upper_expectation_examples() {
        assert_relative_eq!(std_family().upper_expectation(|x| x * x).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(two_vol().upper_expectation(|x| x * x).unwrap(), 1.44, epsilon = 1e-12);
        let v = std_family()
            .upper_expectation_with_breaks(|x| x.abs().powi(3), &[0.0])
            .unwrap();
        assert_relative_eq!(v, E_ABS_Z3, epsilon = 1e-10);
    }

    #[test]
    fn lower_expectation_examples() {
        assert_relative_eq!(two_vol().lower_expectation(|x| x * x).unwrap(), 0.64, epsilon = 1e-12);
        assert_relative_eq!(two_vol().lower_expectation(|_| 2.5).unwrap(), 2.5, epsilon = 1e-12);
        let fam = ScenarioFamily::new(vec![
            ScenarioLaw::gaussian(-0.1, 1.0).unwrap(),
            ScenarioLaw::gaussian(0.2, 1.0).unwrap(),
        ])
        .unwrap();
        assert_relative_eq!(fam.lower_expectation(|x| x).unwrap(), -0.1, epsilon = 1e-12);
        assert_relative_eq!(fam.upper_expectation(|x| x).unwrap(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn runaway_integrand_is_diagnosed() {
        let err = std_family().upper_expectation(|x| (x * x).exp()).unwrap_err();
        assert!(matches!(err, ScenarioError::Quadrature { .. }));
    }

    #[test]
    fn law_validation() {
        assert!(ScenarioLaw::gaussian(0.0, 0.0).is_err());
        assert!(ScenarioLaw::uniform(1.0, 1.0).is_err());
        assert!(ScenarioLaw::two_point(-1.0).is_err());
        assert!(ScenarioLaw::discrete(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(ScenarioLaw::discrete(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(ScenarioFamily::new(vec![]).is_err());
        let point = ScenarioLaw::discrete(vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(ScenarioFamily::new(vec![point]), Err(ScenarioError::Degenerate(_))));
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        let laws = [
            ScenarioLaw::gaussian(0.3, 0.7).unwrap(),
            ScenarioLaw::uniform(-1.0, 2.0).unwrap(),
            ScenarioLaw::two_point(1.5).unwrap(),
            ScenarioLaw::discrete(vec![-1.0, 0.5, 2.0], vec![0.2, 0.5, 0.3]).unwrap(),
        ];
        let rule = GaussLegendre::new(256);
        for law in &laws {
            let m = law.expect(|x| x, &[], &rule).unwrap();
            assert_relative_eq!(m, law.mean(), epsilon = 1e-12);
            let s = law.expect(|x| (x - 0.4).powi(2), &[], &rule).unwrap();
            assert_relative_eq!(s, law.second_moment_about(0.4), epsilon = 1e-12);
        }
    }

    #[test]
    fn envelope_examples() {
        let env = moment_envelope(&std_family(), DEFAULT_MU_GRID).unwrap();
        assert_eq!((env.mu_low, env.mu_high), (0.0, 0.0));
        assert_relative_eq!(env.sigma_low, 1.0);
        assert_relative_eq!(env.sigma_high, 1.0);
        assert_relative_eq!(env.sigma_low_at(0.5), 1.25f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(env.sigma_high_at(0.5), 1.25f64.sqrt(), epsilon = 1e-15);

        let env = moment_envelope(&two_vol(), DEFAULT_MU_GRID).unwrap();
        assert_relative_eq!(env.sigma_low_at(0.0), 0.8, epsilon = 1e-15);
        assert_relative_eq!(env.sigma_high_at(0.0), 1.2, epsilon = 1e-15);
    }

    #[test]
    fn envelope_extremes_match_exact_values() {
        // inf of σ̲(μ) is the smallest law sd (every mean lies in [μ̲, μ̄]);
        // sup of σ̄(μ) is attained at an endpoint of the mean interval
        let fam = ScenarioFamily::new(vec![
            ScenarioLaw::gaussian(-0.3, 0.9).unwrap(),
            ScenarioLaw::uniform(-0.5, 1.5).unwrap(),
            ScenarioLaw::gaussian(0.2, 0.6).unwrap(),
        ])
        .unwrap();
        let env = moment_envelope(&fam, 257).unwrap();
        assert_relative_eq!(env.mu_low, -0.3);
        assert_relative_eq!(env.mu_high, 0.5);
        assert_relative_eq!(env.sigma_low, (1.0f64 / 3.0).sqrt(), epsilon = 1e-9);
        let exact_high = [env.mu_low, env.mu_high]
            .iter()
            .map(|&mu| env.sigma_high_at(mu))
            .fold(0.0, f64::max);
        assert_relative_eq!(env.sigma_high, exact_high, epsilon = 1e-12);
        for i in 0..=40 {
            let mu = env.mu_low + (env.mu_high - env.mu_low) * i as f64 / 40.0;
            assert!(env.sigma_low <= env.sigma_low_at(mu) + 1e-12);
            assert!(env.sigma_low_at(mu) <= env.sigma_high_at(mu));
            assert!(env.sigma_high_at(mu) <= env.sigma_high + 1e-12);
        }
    }

    #[test]
    fn gamma_examples() {
        let fam = std_family();
        let env = moment_envelope(&fam, 16).unwrap();
        for c in [0.1, 1.0, 7.0] {
            assert_relative_eq!(gamma_p(&fam, &env, 0.0, c, 2.0).unwrap(), 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(gamma_p(&fam, &env, 0.0, 1e6, 3.0).unwrap(), E_ABS_Z3, epsilon = 1e-10);
        assert!(gamma_p(&fam, &env, 0.0, 1e-6, 3.0).unwrap() < 1e-5);
        assert_relative_eq!(gamma_p_sup(&fam, &env, 1e6, 3.0, 16).unwrap(), E_ABS_Z3, epsilon = 1e-10);
    }

    #[test]
    fn gamma_p2_is_variance_ratio() {
        let fam = ScenarioFamily::new(vec![
            ScenarioLaw::gaussian(-0.2, 0.9).unwrap(),
            ScenarioLaw::uniform(-1.0, 1.6).unwrap(),
        ])
        .unwrap();
        let env = moment_envelope(&fam, 64).unwrap();
        for mu in [-0.2, 0.0, 0.3] {
            let r = (env.sigma_high_at(mu) / env.sigma_low_at(mu)).powi(2);
            assert_relative_eq!(gamma_p(&fam, &env, mu, 0.5, 2.0).unwrap(), r, epsilon = 1e-11);
        }
        let (_, sup) = grid_refine_max(
            |mu| (env.sigma_high_at(mu) / env.sigma_low_at(mu)).powi(2),
            env.mu_low,
            env.mu_high,
            64,
        );
        assert_relative_eq!(gamma_p_sup(&fam, &env, 0.5, 2.0, 64).unwrap(), sup, epsilon = 1e-10);
    }

    #[test]
    fn gamma_respects_ceiling() {
        let fam = two_vol();
        let env = moment_envelope(&fam, 64).unwrap();
        let v = gamma_p_sup(&fam, &env, 1.0, 3.0, 64).unwrap();
        assert_relative_eq!(gamma_p_ceiling(&env, 1.0, 3.0), 2.8125, epsilon = 1e-12);
        assert!(v <= 2.8125);
        // direct oracle: ξ = X/0.8 under N(0, 1.44) maximises; integrate min(|ξ|^3, ξ^2)
        let gl = GaussLegendre::<f64>::new(400);
        let s = 1.2 / 0.8;
        let oracle = gl.integrate_with_breaks(-12.0, 12.0, &[-1.0 / s, 0.0, 1.0 / s], |z| {
            let xi = s * z;
            (xi.abs().powi(3)).min(xi * xi) * normal_pdf(z)
        });
        assert_relative_eq!(v, oracle, epsilon = 1e-10);
    }

    #[test]
    fn gamma_argument_errors() {
        let fam = std_family();
        let env = moment_envelope(&fam, 16).unwrap();
        assert!(gamma_p(&fam, &env, 0.0, 0.0, 3.0).is_err());
        assert!(gamma_p(&fam, &env, 0.0, 1.0, 3.5).is_err());
        assert!(gamma_p(&fam, &env, 0.0, 1.0, 1.9).is_err());
        assert!(gamma_p(&fam, &env, 0.5, 1.0, 3.0).is_err());
    }
}
