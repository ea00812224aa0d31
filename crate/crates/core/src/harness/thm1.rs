use serde::{Deserialize, Serialize};

use super::report::{ExperimentReport, ReportRow};
use super::{ExperimentConfig, HarnessError, Thm1Config};
use crate::bounds::{thm1_b22_bound_with, thm1_bound_with, BoundInputs};
use crate::dp::{upper_probability, DpOptions, GridSpec, TabulatedRule};
use crate::scenario::{gamma_p_sup, moment_envelope, ScenarioFamily, DEFAULT_MU_GRID};
use crate::smoothfields::{choose_smoothing_params, expected_taylor_error_floor, IntervalUnionSet, LindebergRule};

const GAMMA_MU_GRID: usize = 64;

/// Everything measured for one `(A, n, ε)`; bound rows are derived from it
/// so the constants can be swapped without recomputing the DP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Case {
    pub target_index: usize,
    pub target: IntervalUnionSet,
    pub n: usize,
    pub eps: f64,
    /// `(η, Ê[ψ_η(W_{n,n})])` over the schedule.
    pub eta_values: Vec<(f64, f64)>,
    /// Smallest DP value over the schedule.
    pub upper: f64,
    /// `P(Z ∈ A^ε)`.
    pub gaussian: f64,
    /// `γ_3(ε√n)`.
    pub gamma3_truncated: f64,
    /// `γ_3 = γ_3(∞)`.
    pub gamma3: f64,
    pub delta_floor: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub clamped_mass: f64,
}

impl Thm1Case {
    pub fn excess(&self) -> f64 {
        self.upper - self.gaussian
    }

    pub fn label(&self) -> String {
        format!("A{}={} n={} eps={}", self.target_index, fmt_set(&self.target), self.n, self.eps)
    }

    /// Rows for the truncated-moment bound with constant `c4` and the plain
    /// third-moment bound with constant `c5`.
    pub fn rows(&self, c4: f64, c5: f64, slack: f64) -> Result<Vec<ReportRow>, HarnessError> {
        let inp = BoundInputs::new(self.n, self.eps, 3.0, self.gamma3_truncated)?;
        let b21 = thm1_bound_with(c4, &inp)?;
        let b22 = thm1_b22_bound_with(c5, self.n, self.eps, self.gamma3)?;
        let schedule = self
            .eta_values
            .iter()
            .map(|(eta, v)| format!("eta={eta}:{v:.6}"))
            .collect::<Vec<_>>()
            .join(" ");
        let note = format!("upper {:.6}, gaussian {:.6}; {schedule}", self.upper, self.gaussian);
        let row = |exp: &str, bound: f64| {
            ReportRow::check(exp, self.label(), self.excess(), bound, slack)
                .probability_scale()
                .with_n(self.n)
                .with_eps(self.eps)
                .with_error(self.clamped_mass)
                .with_note(note.clone())
        };
        Ok(vec![row("thm1-truncated", b21), row("thm1-third-moment", b22)])
    }
}

fn fmt_set(set: &IntervalUnionSet) -> String {
    set.intervals()
        .iter()
        .map(|(a, b)| format!("[{a},{b}]"))
        .collect::<Vec<_>>()
        .join("u")
}

fn run_case(
    family: &ScenarioFamily,
    cfg: &Thm1Config,
    target_index: usize,
    target: &IntervalUnionSet,
    n: usize,
    eps: f64,
) -> Result<Thm1Case, HarnessError> {
    let env = moment_envelope(family, DEFAULT_MU_GRID)?;
    let delta_floor = expected_taylor_error_floor(target, eps, n, cfg.floor_grid, cfg.floor_z_order)?;
    let params = choose_smoothing_params(n, &env, delta_floor)?;
    let rule = LindebergRule::new(target, eps, n, params, env.clone())?;
    let grid = GridSpec::for_envelope(&env, cfg.grid_size)?;
    let table = TabulatedRule::new(&rule, grid, n);
    let options = DpOptions {
        law_nodes: cfg.law_nodes,
        ..DpOptions::new(grid)
    };
    let mut eta_values = Vec::with_capacity(cfg.eta.len());
    let mut clamped_mass: f64 = 0.0;
    for &eta in &cfg.eta {
        let out = upper_probability(target, eta, family, &table, n, &options)?;
        if out.clamp_exceeded() {
            return Err(HarnessError::Config(out.warnings.join("; ")));
        }
        clamped_mass = clamped_mass.max(out.clamped_mass);
        eta_values.push((eta, out.value));
    }
    let upper = eta_values.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    Ok(Thm1Case {
        target_index,
        target: target.clone(),
        n,
        eps,
        upper,
        eta_values,
        gaussian: target.enlarge(eps).gaussian_probability(0.0, 1.0),
        gamma3_truncated: gamma_p_sup(family, &env, eps * (n as f64).sqrt(), 3.0, GAMMA_MU_GRID)?,
        gamma3: gamma_p_sup(family, &env, f64::INFINITY, 3.0, GAMMA_MU_GRID)?,
        delta_floor,
        kappa1: params.kappa1,
        kappa2: params.kappa2,
        clamped_mass,
    })
}

/// Measures every `(A, n, ε)` of the `thm1` section.
pub fn thm1_cases(config: &ExperimentConfig) -> Result<Vec<Thm1Case>, HarnessError> {
    let cfg = config
        .thm1
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("configuration has no [thm1] section".into()))?;
    let laws = config
        .family
        .clone()
        .ok_or_else(|| HarnessError::Usage("the theorem experiment needs a scenario family".into()))?;
    if cfg.n.is_empty() || cfg.eps.is_empty() || cfg.targets.is_empty() || cfg.eta.is_empty() {
        return Err(HarnessError::Config("thm1 lists must be nonempty".into()));
    }
    if let Some(t) = cfg.targets.iter().find(|t| t.is_empty()) {
        return Err(HarnessError::Config(format!("empty target set {t:?}")));
    }
    let family = ScenarioFamily::new(laws)?;
    let mut cases = Vec::new();
    for (ti, target) in cfg.targets.iter().enumerate() {
        for &n in &cfg.n {
            for &eps in &cfg.eps {
                cases.push(run_case(&family, cfg, ti, target, n, eps)?);
            }
        }
    }
    Ok(cases)
}

/// Rows for measured cases under the given constants.
pub fn thm1_report(
    config: &ExperimentConfig,
    cases: &[Thm1Case],
    c4: f64,
    c5: f64,
) -> Result<ExperimentReport, HarnessError> {
    let slack = config.thm1.as_ref().map_or(1e-3, |c| c.slack);
    let mut rows = Vec::new();
    for case in cases {
        rows.extend(case.rows(c4, c5, slack)?);
    }
    Ok(ExperimentReport::new("thm1", config, rows))
}

pub fn run_thm1_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let cases = thm1_cases(config)?;
    let cfg = config.thm1.as_ref().expect("checked by thm1_cases");
    thm1_report(config, &cases, cfg.c4, cfg.c5)
}
