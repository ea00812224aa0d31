use rand::Rng;
use rayon::prelude::*;

use super::report::{ExperimentReport, ReportRow};
use super::{groups, ExperimentConfig, HarnessError, LemmaConfig};
use crate::bounds::{kp_lower, maximal_ineq_bound};
use crate::dp::{mollified_indicator, nested_upper_expectation_bruteforce, upper_expectation_dp, DpOptions, GridSpec};
use crate::kernels::{gaussian_third_deriv_l1, gaussian_third_deriv_l1_exact, taylor_error_ceiling, CompactKernel};
use crate::paths::{refine_wiener, simulate_wiener_broken, BrokenLine};
use crate::quadrature::GaussLegendre;
use crate::rng::{stream_id, task_rng};
use crate::rules::{ConstantRule, FnRule};
use crate::scenario::{gamma_p_sup, moment_envelope, ScenarioFamily, ScenarioLaw};
use crate::smoothfields::{
    boundary_grid, smoothed_indicator_field, sup_taylor_error_on_grid, IntervalUnionSet, SmoothedIndicatorField,
};
use crate::special::normal_pdf;

const KERNEL_MASS_SLACK: f64 = 1e-9;
const KERNEL_REMAINDER_SLACK: f64 = 1e-9;
const KERNEL_SCALE_SLACK: f64 = 1e-10;
const CLOSED_FORM_SLACK: f64 = 1e-8;
const FIELD_SLACK: f64 = 1e-6;
const MOMENT_SLACK: f64 = 1e-8;
const DP_EXACT_SLACK: f64 = 1e-5;
/// Points per endpoint of the `x`-grid for field remainders.
const FIELD_X_POINTS: usize = 61;
/// Shifts per sign for field remainders.
const FIELD_Y_POINTS: usize = 24;
const MOMENT_MU_GRID: usize = 64;

/// `(set, step, y, observed, excess)` at the worst point of one field.
type Worst = (usize, usize, f64, f64, f64);

/// `count` log-spaced points in `[lo, hi]`.
fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// One to three intervals with endpoints in `[−3, 3]`; about one set in five
/// is unbounded on the left.
pub fn random_interval_union<R: Rng + ?Sized>(rng: &mut R) -> IntervalUnionSet {
    let k = rng.random_range(1..=3usize);
    let mut ends: Vec<f64> = (0..2 * k).map(|_| rng.random_range(-3.0..3.0)).collect();
    ends.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut intervals: Vec<(f64, f64)> = ends.chunks(2).map(|c| (c[0], c[1].max(c[0] + 0.05))).collect();
    if rng.random_bool(0.2) {
        intervals[0].0 = f64::NEG_INFINITY;
    }
    IntervalUnionSet::new(intervals).expect("ordered finite endpoints")
}

/// One to three laws drawn from Gaussian, uniform and symmetric two-point
/// shapes with random location and scale.
pub fn random_family<R: Rng + ?Sized>(rng: &mut R) -> ScenarioFamily {
    let k = rng.random_range(1..=3usize);
    let laws = (0..k)
        .map(|_| {
            let scale = rng.random_range(0.3..2.0);
            match rng.random_range(0..3u8) {
                0 => ScenarioLaw::Gaussian {
                    mean: rng.random_range(-0.5..0.5),
                    sd: scale,
                },
                1 => {
                    let a = rng.random_range(-1.5..0.0);
                    ScenarioLaw::Uniform { a, b: a + 2.0 * scale }
                }
                _ => ScenarioLaw::SymmetricTwoPoint { scale },
            }
        })
        .collect();
    ScenarioFamily::new(laws).expect("valid random laws")
}

/// At most two laws with two or three sorted atoms each.
pub fn random_discrete_family<R: Rng + ?Sized>(rng: &mut R) -> ScenarioFamily {
    let k = rng.random_range(1..=2usize);
    let laws = (0..k)
        .map(|_| {
            let m = rng.random_range(2..=3usize);
            let mut atoms: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            atoms.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            for i in 1..m {
                atoms[i] = atoms[i].max(atoms[i - 1] + 0.1);
            }
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            ScenarioLaw::Discrete {
                atoms,
                weights: raw.iter().map(|w| w / total).collect(),
            }
        })
        .collect();
    ScenarioFamily::new(laws).expect("valid random laws")
}

/// Mass, remainder ceiling and scale identity of `g_r`.
pub fn kernel_suite(cfg: &LemmaConfig) -> Result<Vec<ReportRow>, HarnessError> {
    const EXP: &str = "kernel";
    let gl = GaussLegendre::<f64>::new(32);
    let half = CompactKernel::new(0.5).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut rows = Vec::new();
    for &r in &cfg.radii {
        let g = CompactKernel::new(r).map_err(|e| HarnessError::Config(e.to_string()))?;
        let knots = g.knots();
        let mass = gl.integrate_with_breaks(knots[0], knots[3], &knots[1..3], |x| g.density(x));
        rows.push(ReportRow::check(EXP, format!("mass r={r}"), (mass - 1.0).abs(), 0.0, KERNEL_MASS_SLACK));

        let ys = log_space(1e-4 * r, 10.0 * r, cfg.y_points);
        let mut worst: Option<(f64, f64, f64)> = None;
        let mut scale_gap: f64 = 0.0;
        for &y in &ys {
            let e = g.taylor_error_l1(y);
            let ceiling = taylor_error_ceiling(cfg.kernel_constant, r, y);
            if worst.is_none_or(|(_, o, b)| e - ceiling > o - b) {
                worst = Some((y, e, ceiling));
            }
            scale_gap = scale_gap.max((e - half.taylor_error_l1(y / (2.0 * r))).abs());
        }
        let (y, e, ceiling) = worst.expect("nonempty y grid");
        rows.push(
            ReportRow::check(EXP, format!("remainder r={r}"), e, ceiling, KERNEL_REMAINDER_SLACK)
                .with_note(format!("worst y={y:.6e}, constant {}", cfg.kernel_constant)),
        );
        rows.push(ReportRow::check(EXP, format!("scale identity r={r}"), scale_gap, 0.0, KERNEL_SCALE_SLACK));
    }
    Ok(rows)
}

/// `∫|p_1'''|` by quadrature, split at the sign changes `0, ±√3`.
fn gaussian_third_deriv_l1_quadrature() -> f64 {
    let gl = GaussLegendre::<f64>::new(64);
    let s3 = 3f64.sqrt();
    gl.integrate_with_breaks(-14.0, 14.0, &[-s3, 0.0, s3], |x| ((3.0 * x - x * x * x) * normal_pdf(x)).abs())
}

/// Gaussian-kernel constants and the Taylor bound for `P(x + bZ ∈ A)`.
pub fn gaussian_kernel_suite(cfg: &LemmaConfig, seed: u64) -> Result<Vec<ReportRow>, HarnessError> {
    const EXP: &str = "gaussian-kernel";
    let quad = gaussian_third_deriv_l1_quadrature();
    let closed = gaussian_third_deriv_l1::<f64>();
    let exact = gaussian_third_deriv_l1_exact::<f64>();
    let mut rows = vec![
        ReportRow::check(EXP, "closed form vs quadrature", (closed - quad).abs(), 0.0, CLOSED_FORM_SLACK)
            .with_note(format!("closed form {closed:.10}, quadrature {quad:.10}")),
        ReportRow::check(EXP, "exact value vs quadrature", (exact - quad).abs(), 0.0, CLOSED_FORM_SLACK)
            .with_note(format!("exact {exact:.10}")),
        ReportRow::check(EXP, "closed form below 2.4", closed, 2.4, 0.0),
    ];
    let sets: Vec<IntervalUnionSet> = (0..cfg.gaussian_sets)
        .map(|i| random_interval_union(&mut task_rng(seed, stream_id(groups::GAUSSIAN_SETS, i as u32))))
        .collect();
    for &b in &cfg.gaussian_scales {
        let ys = log_space(0.01 * b, 3.0 * b, FIELD_Y_POINTS);
        let per_set: Vec<Result<(usize, f64, f64, f64), HarnessError>> = sets
            .par_iter()
            .enumerate()
            .map(|(i, set)| {
                let field = SmoothedIndicatorField::gaussian(set.clone(), b)?;
                let mut worst = (i, 0.0, 0.0, f64::NEG_INFINITY);
                for &y in &ys {
                    let xs = boundary_grid(set, 4.0 * b + y, FIELD_X_POINTS);
                    let bound = cfg.gaussian_constant * (y / b).powi(3);
                    for y in [y, -y] {
                        let obs = sup_taylor_error_on_grid(&field, &xs, y);
                        if obs - bound > worst.3 {
                            worst = (i, y, obs, obs - bound);
                        }
                    }
                }
                Ok(worst)
            })
            .collect();
        let mut worst = (0, 0.0, 0.0, f64::NEG_INFINITY);
        for w in per_set {
            let w = w?;
            if w.3 > worst.3 {
                worst = w;
            }
        }
        let (i, y, obs, _) = worst;
        let bound = cfg.gaussian_constant * (y.abs() / b).powi(3);
        rows.push(
            ReportRow::check(EXP, format!("field remainder b={b}"), obs, bound, FIELD_SLACK)
                .with_note(format!("worst set #{i}, y={y:.4e}, {} sets", sets.len())),
        );
    }
    Ok(rows)
}

/// Taylor remainders of the smoothed fields against
/// `0.4|y|^3 (1 − k/n)^{-3/2}`.
pub fn field_remainder_suite(cfg: &LemmaConfig, seed: u64) -> Result<Vec<ReportRow>, HarnessError> {
    const EXP: &str = "field-remainder";
    let sets: Vec<IntervalUnionSet> = (0..cfg.field_sets)
        .map(|i| random_interval_union(&mut task_rng(seed, stream_id(groups::FIELD_SETS, i as u32))))
        .collect();
    let ys = log_space(1e-3, 2.0, FIELD_Y_POINTS);
    let mut rows = Vec::new();
    for &eps in &cfg.field_eps {
        for &n in &cfg.field_n {
            let jobs: Vec<(usize, usize)> = (0..sets.len()).flat_map(|i| (1..n).map(move |k| (i, k))).collect();
            let results: Vec<Result<Worst, HarnessError>> = jobs
                .par_iter()
                .map(|&(i, k)| {
                    let field = smoothed_indicator_field(&sets[i], eps, k, n)?;
                    let b = (1.0 - k as f64 / n as f64).sqrt();
                    let mut worst = (i, k, 0.0, 0.0, f64::NEG_INFINITY);
                    for &y in &ys {
                        let xs = boundary_grid(field.target(), 4.0 * b + eps + y, FIELD_X_POINTS);
                        let bound = cfg.gaussian_constant * (y / b).powi(3);
                        for y in [y, -y] {
                            let obs = sup_taylor_error_on_grid(&field, &xs, y);
                            if obs - bound > worst.4 {
                                worst = (i, k, y, obs, obs - bound);
                            }
                        }
                    }
                    Ok(worst)
                })
                .collect();
            let mut worst = (0, 0, 0.0, 0.0, f64::NEG_INFINITY);
            for w in results {
                let w = w?;
                if w.4 > worst.4 {
                    worst = w;
                }
            }
            let (i, k, y, obs, _) = worst;
            let b = (1.0 - k as f64 / n as f64).sqrt();
            let bound = cfg.gaussian_constant * (y.abs() / b).powi(3);
            rows.push(
                ReportRow::check(EXP, format!("eps={eps} n={n}"), obs, bound, FIELD_SLACK)
                    .with_n(n)
                    .with_eps(eps)
                    .with_note(format!("worst set #{i}, k={k}, y={y:.4e}")),
            );
        }
    }
    Ok(rows)
}

/// `γ_p(C) ≥ min{1, 2C^{p−2}/p}` over random families. Each row holds the
/// smallest `γ_p(C)` found as its bound.
pub fn truncated_moment_suite(cfg: &LemmaConfig, seed: u64) -> Result<Vec<ReportRow>, HarnessError> {
    const EXP: &str = "truncated-moment";
    let families: Vec<ScenarioFamily> = (0..cfg.families)
        .map(|i| random_family(&mut task_rng(seed, stream_id(groups::FAMILIES, i as u32))))
        .collect();
    let mut rows = Vec::new();
    for &p in &cfg.p_values {
        for &c in &cfg.c_values {
            let lower = kp_lower(c, p)?;
            let gammas: Vec<Result<f64, HarnessError>> = families
                .par_iter()
                .map(|fam| {
                    let env = moment_envelope(fam, MOMENT_MU_GRID)?;
                    Ok(gamma_p_sup(fam, &env, c, p, MOMENT_MU_GRID)?)
                })
                .collect();
            let mut min = (0, f64::INFINITY);
            for (i, g) in gammas.into_iter().enumerate() {
                let g = g?;
                if g < min.1 {
                    min = (i, g);
                }
            }
            rows.push(
                ReportRow::check(EXP, format!("p={p} C={c}"), lower, min.1, MOMENT_SLACK)
                    .with_note(format!("smallest over {} families at #{}", families.len(), min.0)),
            );
        }
    }
    Ok(rows)
}

/// Largest gap between a refined Wiener path and its broken line at knots
/// `k/n`.
fn bridge_gap(refined: &BrokenLine<f64>, coarse: &BrokenLine<f64>, m: usize) -> f64 {
    refined
        .knots()
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let (k, rem) = (j / m, j % m);
            let c = coarse.knots();
            let interp = if rem == 0 {
                c[k]
            } else {
                c[k] + (c[k + 1] - c[k]) * rem as f64 / m as f64
            };
            (v - interp).abs()
        })
        .fold(0.0, f64::max)
}

/// Monte Carlo `P(‖B_n − B‖ ≥ b)` against `n E|Z|^3/(√n b)^3`, with `B`
/// approximated by bridge refinement.
pub fn maximal_inequality_suite(cfg: &LemmaConfig, seed: u64) -> Result<Vec<ReportRow>, HarnessError> {
    const EXP: &str = "maximal-inequality";
    if cfg.maximal_paths == 0 || cfg.maximal_depth < 2 {
        return Err(HarnessError::Config("maximal inequality needs paths > 0 and depth >= 2".into()));
    }
    let m = cfg.maximal_depth;
    let mut rows = Vec::new();
    for (ni, &n) in cfg.maximal_n.iter().enumerate() {
        let base = ni * cfg.maximal_paths;
        let gaps: Vec<f64> = (0..cfg.maximal_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = task_rng(seed, stream_id(groups::MAXIMAL, (base + i) as u32));
                let coarse: BrokenLine<f64> = simulate_wiener_broken(n, &mut rng);
                let fine = refine_wiener(&coarse, m, &mut rng).expect("depth checked");
                bridge_gap(&fine, &coarse, m)
            })
            .collect();
        let total = gaps.len() as f64;
        for &b in &cfg.maximal_b {
            let hits = gaps.iter().filter(|&&g| g >= b).count() as f64;
            let phat = hits / total;
            let se = (phat * (1.0 - phat) / total).sqrt();
            let bound = maximal_ineq_bound(n, b, 3.0)?;
            rows.push(
                ReportRow::check(EXP, format!("n={n} b={b}"), phat, bound, 3.0 * se)
                    .probability_scale()
                    .with_n(n)
                    .with_error(se)
                    .with_note(format!("{} paths, bridge depth {m}", gaps.len())),
            );
        }
    }
    Ok(rows)
}

/// Grid DP against exact enumeration on random discrete families, and a
/// single continuous law against plain Monte Carlo.
pub fn dp_crosscheck_suite(cfg: &LemmaConfig, seed: u64) -> Result<Vec<ReportRow>, HarnessError> {
    const EXP: &str = "dp-crosscheck";
    let grid = GridSpec::new(-12.0, 12.0, 100_001)?;
    let options = DpOptions::new(grid);
    let rule = FnRule(|k: usize, w: f64| (0.05 * k as f64, 1.0 + 0.3 * w.sin().abs()));
    let results: Vec<Result<(usize, usize, f64, f64), HarnessError>> = (0..cfg.dp_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, stream_id(groups::DP_CROSS, i as u32));
            let fam = random_discrete_family(&mut rng);
            let target = random_interval_union(&mut rng);
            let psi = mollified_indicator(&target, rng.random_range(0.1..0.5))?;
            let mut worst = (i, 0, 0.0, 0.0);
            for n in 1..=3 {
                let exact = nested_upper_expectation_bruteforce(&fam, &rule, n, |w| psi.eval(w))?;
                let dp = upper_expectation_dp(&fam, &rule, n, |w| psi.eval(w), &options)?;
                let gap = (exact - dp.value).abs();
                if gap >= worst.2 {
                    worst = (i, n, gap, exact);
                }
            }
            Ok(worst)
        })
        .collect();
    let mut worst = (0, 0, 0.0, 0.0);
    for r in results {
        let r = r?;
        if r.2 >= worst.2 {
            worst = r;
        }
    }
    let mut rows = vec![ReportRow::check(EXP, "grid vs enumeration", worst.2, 0.0, DP_EXACT_SLACK)
        .with_note(format!("{} instances, n <= 3; worst #{} at n={}", cfg.dp_instances, worst.0, worst.1))];

    let s = 3f64.sqrt();
    let law = ScenarioLaw::Uniform { a: -s, b: s };
    let fam = ScenarioFamily::new(vec![law.clone()])?;
    let env = moment_envelope(&fam, 16)?;
    let target = IntervalUnionSet::new(vec![(-0.5, 1.0)])?;
    let psi = mollified_indicator(&target, 0.2)?;
    let unit = ConstantRule { mu: 0.0, sigma: 1.0 };
    for (ni, &n) in cfg.dp_mc_n.iter().enumerate() {
        let dp = upper_expectation_dp(&fam, &unit, n, |w| psi.eval(w), &DpOptions::for_envelope(&env))?;
        let base = ni * cfg.dp_mc_paths;
        let draws: Vec<f64> = (0..cfg.dp_mc_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = task_rng(seed, stream_id(groups::DP_MC, (base + i) as u32));
                let sum: f64 = (0..n).map(|_| law.sample(&mut rng)).sum();
                psi.eval(sum / (n as f64).sqrt())
            })
            .collect();
        let total = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / total;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (total - 1.0);
        let se = (var / total).sqrt();
        rows.push(
            ReportRow::check(EXP, format!("single law vs Monte Carlo n={n}"), (dp.value - mean).abs(), 0.0, 3.0 * se)
                .with_n(n)
                .with_error(se)
                .with_note(format!("dp {:.6}, mc {mean:.6}", dp.value)),
        );
    }
    Ok(rows)
}

/// Runs every lemma suite of the `lemmas` section.
pub fn run_verify_lemmas(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let cfg = config
        .lemmas
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("configuration has no [lemmas] section".into()))?;
    let seed = config.seed;
    let mut rows = kernel_suite(cfg)?;
    rows.extend(gaussian_kernel_suite(cfg, seed)?);
    rows.extend(field_remainder_suite(cfg, seed)?);
    rows.extend(truncated_moment_suite(cfg, seed)?);
    rows.extend(maximal_inequality_suite(cfg, seed)?);
    rows.extend(dp_crosscheck_suite(cfg, seed)?);
    Ok(ExperimentReport::new("verify-lemmas", config, rows))
}
