//! Nested upper expectations `Ê[ψ(W_{n,n})]` by backward induction on a
//! grid of the running normalized sum.
//!
//! `V_n = ψ`, `V_{k−1}(w) = max_θ E_θ V_k(w + (X − μ_k(w))/(σ_k(w)√n))` and
//! the result is `V_0(0)`. Values between grid points are interpolated
//! linearly; arguments beyond the grid are clamped to the edge values.

use std::io::Write;

use rayon::prelude::*;

use crate::quadrature::GaussLegendre;
use crate::rules::StepRule;
use crate::scenario::{MomentEnvelope, ScenarioFamily};
use crate::smoothfields::IntervalUnionSet;

pub const DEFAULT_GRID_POINTS: usize = 4097;
pub const DEFAULT_GRID_HALF_WIDTH: f64 = 8.0;
pub const DEFAULT_LAW_NODES: usize = 128;
pub const DEFAULT_CLAMP_THRESHOLD: f64 = 1e-6;
/// Recursion-tree leaf budget for the brute-force engine.
pub const BRUTEFORCE_MAX_LEAVES: f64 = 1e7;

#[derive(Debug, thiserror::Error)]
pub enum DpError {
    #[error("grid needs at least 2 points on a nonempty interval (got {m} points on [{lo}, {hi}])")]
    BadGrid { lo: f64, hi: f64, m: usize },
    #[error("terminal function is not finite and bounded on the grid (value {0} at w = {1})")]
    UnboundedTerminal(f64, f64),
    #[error("step {k}: rule returned sigma = {sigma} at w = {w}")]
    BadRule { k: usize, w: f64, sigma: f64 },
    #[error("n must be positive")]
    ZeroSteps,
    #[error("brute force needs discrete laws with at most 4 atoms ({0})")]
    NotDiscrete(String),
    #[error("brute force recursion too large: n = {n}, {leaves:e} leaves")]
    TooLarge { n: usize, leaves: f64 },
    #[error("mollifier width must be positive, got {0}")]
    BadEta(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform grid `[lo, hi]` with `m` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lo: f64,
    hi: f64,
    m: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, m: usize) -> Result<Self, DpError> {
        if m < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(DpError::BadGrid { lo, hi, m });
        }
        Ok(Self { lo, hi, m })
    }

    /// `m` points on `[−8, 8]·max(1, σ̄/σ̲)`.
    pub fn for_envelope(env: &MomentEnvelope, m: usize) -> Result<Self, DpError> {
        let half = DEFAULT_GRID_HALF_WIDTH * (env.sigma_high / env.sigma_low).max(1.0);
        Self::new(-half, half, m)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.m {
            self.hi
        } else {
            self.lo + j as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.point(j)).collect()
    }
}

/// Values on a [`GridSpec`]; evaluation interpolates and clamps.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValueFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridValueFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, DpError> {
        if values.len() != grid.m {
            return Err(DpError::BadGrid { lo: grid.lo, hi: grid.hi, m: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: GridSpec, f: F) -> Self {
        Self {
            values: grid.points().into_iter().map(f).collect(),
            grid,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, w: f64) -> f64 {
        let g = &self.grid;
        if w <= g.lo {
            return self.values[0];
        }
        if w >= g.hi {
            return self.values[g.m - 1];
        }
        let s = (w - g.lo) / g.step();
        let j = (s.floor() as usize).min(g.m - 2);
        let t = s - j as f64;
        self.values[j] + t * (self.values[j + 1] - self.values[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpOptions {
    pub grid: GridSpec,
    /// Gauss–Legendre order per continuous law.
    pub law_nodes: usize,
    /// Largest tolerated mass sent off-grid from the inner half of the grid.
    pub clamp_threshold: f64,
    pub keep_snapshots: bool,
}

impl DpOptions {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            law_nodes: DEFAULT_LAW_NODES,
            clamp_threshold: DEFAULT_CLAMP_THRESHOLD,
            keep_snapshots: false,
        }
    }

    pub fn for_envelope(env: &MomentEnvelope) -> Self {
        Self::new(GridSpec::for_envelope(env, DEFAULT_GRID_POINTS).expect("envelope grid is valid"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpOutcome {
    /// `V_0(0)`.
    pub value: f64,
    /// Largest one-step probability of leaving the grid, over steps, laws and
    /// start points with `|w| <= max(|lo|, |hi|)/2`.
    pub clamped_mass: f64,
    pub warnings: Vec<String>,
    /// `V_n, V_{n−1}, …, V_0` when requested.
    pub snapshots: Vec<Vec<f64>>,
}

impl DpOutcome {
    pub fn clamp_exceeded(&self) -> bool {
        !self.warnings.is_empty()
    }

    /// One row per step: `step,v_0,...,v_{M−1}` (step `k` holds `V_k`).
    pub fn write_snapshots_csv<W: Write>(&self, mut out: W, grid: &GridSpec) -> Result<(), DpError> {
        write!(out, "step")?;
        for w in grid.points() {
            write!(out, ",{w:?}")?;
        }
        writeln!(out)?;
        let n = self.snapshots.len().saturating_sub(1);
        for (i, row) in self.snapshots.iter().enumerate() {
            write!(out, "{}", n - i)?;
            for v in row {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// A rule evaluated once at every grid point; lookups between grid points
/// interpolate linearly in `(μ, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedRule {
    grid: GridSpec,
    /// `params[k − 1][j]`.
    params: Vec<Vec<(f64, f64)>>,
}

impl TabulatedRule {
    pub fn new<R: StepRule + ?Sized>(rule: &R, grid: GridSpec, n: usize) -> Self {
        let points = grid.points();
        let params = (1..=n)
            .map(|k| points.par_iter().map(|&w| rule.step_params(k, w)).collect())
            .collect();
        Self { grid, params }
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }
}

impl StepRule for TabulatedRule {
    fn step_params(&self, k: usize, w: f64) -> (f64, f64) {
        let row = &self.params[k - 1];
        let g = &self.grid;
        let s = ((w - g.lo) / g.step()).clamp(0.0, (g.m - 1) as f64);
        let j = s.round();
        if (s - j).abs() < 1e-9 {
            return row[j as usize];
        }
        let j = (s.floor() as usize).min(g.m - 2);
        let t = s - j as f64;
        let (a, b) = (row[j], row[j + 1]);
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    }
}

/// Normalized quadrature nodes of every law: weights sum to one so constants
/// pass through a step unchanged.
fn law_nodes(family: &ScenarioFamily, order: usize) -> Vec<Vec<(f64, f64)>> {
    let rule = GaussLegendre::<f64>::new(order);
    family
        .laws()
        .iter()
        .map(|law| {
            let nodes = law.quadrature_nodes(&rule);
            let total: f64 = nodes.iter().map(|n| n.1).sum();
            nodes.into_iter().map(|(x, w)| (x, w / total)).collect()
        })
        .collect()
}

/// Backward induction for `Ê[terminal(W_{n,n})]` under `rule`.
pub fn upper_expectation_dp<R, F>(
    family: &ScenarioFamily,
    rule: &R,
    n: usize,
    terminal: F,
    options: &DpOptions,
) -> Result<DpOutcome, DpError>
where
    R: StepRule + ?Sized,
    F: Fn(f64) -> f64,
{
    if n == 0 {
        return Err(DpError::ZeroSteps);
    }
    let grid = options.grid;
    let points = grid.points();
    let mut current = GridValueFunction::from_fn(grid, &terminal);
    for (&w, &v) in points.iter().zip(current.values()) {
        if !v.is_finite() || v.abs() > 1e12 {
            return Err(DpError::UnboundedTerminal(v, w));
        }
    }
    let nodes = law_nodes(family, options.law_nodes);
    let sqrt_n = (n as f64).sqrt();
    let inner = 0.5 * grid.lo.abs().max(grid.hi.abs());
    let mut clamped_mass: f64 = 0.0;
    let mut snapshots = Vec::new();
    if options.keep_snapshots {
        snapshots.push(current.values.clone());
    }
    for k in (1..=n).rev() {
        let step: Vec<Result<(f64, f64), DpError>> = points
            .par_iter()
            .map(|&w| {
                let (mu, sigma) = rule.step_params(k, w);
                if !(sigma > 0.0) || !mu.is_finite() {
                    return Err(DpError::BadRule { k, w, sigma });
                }
                let scale = 1.0 / (sigma * sqrt_n);
                let mut best = f64::NEG_INFINITY;
                let mut off = 0.0f64;
                for law in &nodes {
                    let mut acc = 0.0;
                    let mut out = 0.0;
                    for &(x, p) in law {
                        let next = w + (x - mu) * scale;
                        if next < grid.lo || next > grid.hi {
                            out += p;
                        }
                        acc += p * current.eval(next);
                    }
                    best = best.max(acc);
                    off = off.max(out);
                }
                Ok((best, if w.abs() <= inner { off } else { 0.0 }))
            })
            .collect();
        let mut values = Vec::with_capacity(grid.m);
        for r in step {
            let (v, off) = r?;
            values.push(v);
            clamped_mass = clamped_mass.max(off);
        }
        current = GridValueFunction { grid, values };
        if options.keep_snapshots {
            snapshots.push(current.values.clone());
        }
    }
    let mut warnings = Vec::new();
    if clamped_mass > options.clamp_threshold {
        warnings.push(format!(
            "grid [{}, {}] too narrow: {clamped_mass:e} of one-step mass clamped (threshold {:e})",
            grid.lo, grid.hi, options.clamp_threshold
        ));
    }
    Ok(DpOutcome {
        value: current.eval(0.0),
        clamped_mass,
        warnings,
        snapshots,
    })
}

/// Exact nested value by full recursion over laws and atoms.
pub fn nested_upper_expectation_bruteforce<R, F>(
    family: &ScenarioFamily,
    rule: &R,
    n: usize,
    terminal: F,
) -> Result<f64, DpError>
where
    R: StepRule + ?Sized,
    F: Fn(f64) -> f64,
{
    if n == 0 {
        return Err(DpError::ZeroSteps);
    }
    let mut atoms = Vec::with_capacity(family.len());
    for law in family.laws() {
        match law.atoms() {
            Some(a) if a.len() <= 4 => atoms.push(a),
            _ => return Err(DpError::NotDiscrete(law.label())),
        }
    }
    let branching: usize = atoms.iter().map(Vec::len).sum();
    let leaves = (branching as f64).powi(n as i32);
    if n > 12 || leaves > BRUTEFORCE_MAX_LEAVES {
        return Err(DpError::TooLarge { n, leaves });
    }
    let sqrt_n = (n as f64).sqrt();
    fn recurse<R: StepRule + ?Sized, F: Fn(f64) -> f64>(
        k: usize,
        w: f64,
        n: usize,
        sqrt_n: f64,
        atoms: &[Vec<(f64, f64)>],
        rule: &R,
        terminal: &F,
    ) -> Result<f64, DpError> {
        if k > n {
            return Ok(terminal(w));
        }
        let (mu, sigma) = rule.step_params(k, w);
        if !(sigma > 0.0) {
            return Err(DpError::BadRule { k, w, sigma });
        }
        let mut best = f64::NEG_INFINITY;
        for law in atoms {
            let mut acc = 0.0;
            for &(x, p) in law {
                acc += p * recurse(k + 1, w + (x - mu) / (sigma * sqrt_n), n, sqrt_n, atoms, rule, terminal)?;
            }
            best = best.max(acc);
        }
        Ok(best)
    }
    recurse(1, 0.0, n, sqrt_n, &atoms, rule, &terminal)
}

/// `ψ_η(x) = max(0, 1 − dist(x, A)/η)`: equals 1 on `A`, vanishes outside
/// `A^η`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedIndicator {
    set: IntervalUnionSet,
    eta: f64,
}

impl MollifiedIndicator {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn set(&self) -> &IntervalUnionSet {
        &self.set
    }

    pub fn eval(&self, x: f64) -> f64 {
        (1.0 - self.set.distance(x) / self.eta).max(0.0)
    }
}

pub fn mollified_indicator(a: &IntervalUnionSet, eta: f64) -> Result<MollifiedIndicator, DpError> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(DpError::BadEta(eta));
    }
    Ok(MollifiedIndicator { set: a.clone(), eta })
}

/// `Ê[ψ_η(W_{n,n})]`: an upper estimate of `P̄(W_{n,n} ∈ A)`.
pub fn upper_probability<R: StepRule + ?Sized>(
    a: &IntervalUnionSet,
    eta: f64,
    family: &ScenarioFamily,
    rule: &R,
    n: usize,
    options: &DpOptions,
) -> Result<DpOutcome, DpError> {
    let psi = mollified_indicator(a, eta)?;
    upper_expectation_dp(family, rule, n, |w| psi.eval(w), options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{ConstantRule, FnRule};
    use crate::scenario::{moment_envelope, ScenarioLaw};
    use approx::assert_relative_eq;

    fn set(v: &[(f64, f64)]) -> IntervalUnionSet {
        IntervalUnionSet::new(v.to_vec()).unwrap()
    }

    fn discrete_family() -> ScenarioFamily {
        ScenarioFamily::new(vec![
            ScenarioLaw::discrete(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap(),
            ScenarioLaw::discrete(vec![-1.5, 0.0, 3.0], vec![0.4, 0.4, 0.2]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn mollifier_examples() {
        let psi = mollified_indicator(&set(&[(0.0, 1.0)]), 0.4).unwrap();
        assert_eq!(psi.eval(0.5), 1.0);
        assert_eq!(psi.eval(1.5), 0.0);
        assert_relative_eq!(psi.eval(1.2), 0.5, epsilon = 1e-15);
        assert!(mollified_indicator(&set(&[(0.0, 1.0)]), 0.0).is_err());
    }

    #[test]
    fn interpolation_and_clamping() {
        let g = GridSpec::new(-1.0, 1.0, 5).unwrap();
        let f = GridValueFunction::from_fn(g, |w| 2.0 * w);
        assert_relative_eq!(f.eval(0.3), 0.6, epsilon = 1e-15);
        assert_eq!(f.eval(5.0), 2.0);
        assert_eq!(f.eval(-5.0), -2.0);
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn constants_pass_through() {
        let fam = ScenarioFamily::new(vec![
            ScenarioLaw::gaussian(0.0, 0.8).unwrap(),
            ScenarioLaw::gaussian(0.0, 1.2).unwrap(),
        ])
        .unwrap();
        let env = moment_envelope(&fam, 32).unwrap();
        let rule = ConstantRule { mu: 0.0, sigma: 1.0 };
        let out = upper_expectation_dp(&fam, &rule, 4, |_| 0.37, &DpOptions::for_envelope(&env)).unwrap();
        assert_relative_eq!(out.value, 0.37, epsilon = 1e-13);
    }

    #[test]
    fn one_step_bruteforce_is_direct_enumeration() {
        let fam = discrete_family();
        let rule = ConstantRule { mu: 0.1, sigma: 1.3 };
        let f = |w: f64| (w - 0.2).powi(2).min(3.0);
        let direct = fam
            .laws()
            .iter()
            .map(|l| l.atoms().unwrap().iter().map(|&(x, p)| p * f((x - 0.1) / 1.3)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(nested_upper_expectation_bruteforce(&fam, &rule, 1, f).unwrap(), direct);
        assert_eq!(nested_upper_expectation_bruteforce(&fam, &rule, 3, |_| 0.0).unwrap(), 0.0);
    }

    #[test]
    fn dp_matches_bruteforce() {
        let fam = discrete_family();
        let rule = FnRule(|k: usize, w: f64| (0.05 * k as f64, 1.0 + 0.3 * (w.sin()).abs()));
        let psi = mollified_indicator(&set(&[(-0.3, 0.4)]), 0.3).unwrap();
        let grid = GridSpec::new(-12.0, 12.0, 100_001).unwrap();
        for n in 1..=3 {
            let exact = nested_upper_expectation_bruteforce(&fam, &rule, n, |w| psi.eval(w)).unwrap();
            let dp = upper_expectation_dp(&fam, &rule, n, |w| psi.eval(w), &DpOptions::new(grid)).unwrap();
            assert!((exact - dp.value).abs() < 1e-5, "n={n}: {exact} vs {}", dp.value);
        }
    }

    #[test]
    fn bruteforce_rejects_large_or_continuous() {
        let fam = discrete_family();
        let rule = ConstantRule { mu: 0.0, sigma: 1.0 };
        assert!(matches!(
            nested_upper_expectation_bruteforce(&fam, &rule, 12, |_| 0.0),
            Err(DpError::TooLarge { .. })
        ));
        let cont = ScenarioFamily::new(vec![ScenarioLaw::uniform(-1.0, 1.0).unwrap()]).unwrap();
        assert!(matches!(
            nested_upper_expectation_bruteforce(&cont, &rule, 1, |_| 0.0),
            Err(DpError::NotDiscrete(_))
        ));
    }

    #[test]
    fn upper_probability_trivial_sets() {
        let fam = discrete_family();
        let env = moment_envelope(&fam, 32).unwrap();
        let rule = ConstantRule { mu: 0.0, sigma: env.sigma_low_at(0.0) };
        let opts = DpOptions::for_envelope(&env);
        let all = upper_probability(&IntervalUnionSet::real_line(), 0.1, &fam, &rule, 3, &opts).unwrap();
        assert_relative_eq!(all.value, 1.0, epsilon = 1e-13);
        let none = upper_probability(&IntervalUnionSet::empty(), 0.1, &fam, &rule, 3, &opts).unwrap();
        assert_eq!(none.value, 0.0);
    }

    #[test]
    fn narrow_grid_is_diagnosed() {
        let fam = ScenarioFamily::new(vec![ScenarioLaw::gaussian(0.0, 1.0).unwrap()]).unwrap();
        let rule = ConstantRule { mu: 0.0, sigma: 1.0 };
        let opts = DpOptions::new(GridSpec::new(-1.0, 1.0, 201).unwrap());
        let out = upper_expectation_dp(&fam, &rule, 4, |w| w.abs().min(1.0), &opts).unwrap();
        assert!(out.clamp_exceeded());
        assert!(upper_expectation_dp(&fam, &rule, 2, |w| 1.0 / w, &opts).is_err());
    }

    #[test]
    fn tabulated_rule_reproduces_grid_values() {
        let rule = FnRule(|k: usize, w: f64| (0.1 * w.sin(), 1.0 + 0.1 * k as f64 + 0.05 * w.cos()));
        let grid = GridSpec::new(-2.0, 2.0, 41).unwrap();
        let tab = TabulatedRule::new(&rule, grid, 3);
        for k in 1..=3 {
            for w in grid.points() {
                assert_eq!(tab.step_params(k, w), rule.step_params(k, w));
            }
            let (m, s) = tab.step_params(k, 0.05);
            let (m0, s0) = rule.step_params(k, 0.05);
            assert!((m - m0).abs() < 1e-3 && (s - s0).abs() < 1e-3);
        }
    }

    #[test]
    fn snapshots_dump() {
        let fam = discrete_family();
        let rule = ConstantRule { mu: 0.0, sigma: 1.0 };
        let grid = GridSpec::new(-2.0, 2.0, 3).unwrap();
        let mut opts = DpOptions::new(grid);
        opts.keep_snapshots = true;
        let out = upper_expectation_dp(&fam, &rule, 2, |w| w.abs().min(1.0), &opts).unwrap();
        let mut buf = Vec::new();
        out.write_snapshots_csv(&mut buf, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], "step,-2.0,0.0,2.0");
        assert!(rows[1].starts_with("2,1.0,0.0,1.0"));
    }
}
