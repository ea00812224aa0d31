use rand::Rng;
use rayon::prelude::*;

use super::report::{ExperimentReport, ReportRow};
use super::{groups, ExperimentConfig, FcltConfig, HarnessError};
use crate::bounds::classical_fclt_bound;
use crate::paths::{build_sn_classical, simulate_wiener_sample, PathSample, Provenance};
use crate::prokhorov::{one_sided_with, prokhorov_with, DistanceMatrix, EmpiricalMeasure};
use crate::quadrature::GaussLegendre;
use crate::rng::{stream_id, task_rng};
use crate::scenario::{ScenarioLaw, DEFAULT_QUADRATURE_ORDER};

/// `E min{|ξ|^p, √n ξ^2}` for the standardized `ξ = (X − EX)/sd(X)`.
pub fn truncated_moment(law: &ScenarioLaw, n: usize, p: f64) -> Result<f64, HarnessError> {
    if n == 0 || !(2.0..=3.0).contains(&p) {
        return Err(HarnessError::Config(format!("truncated moment needs n >= 1 and p in [2, 3] (n = {n}, p = {p})")));
    }
    law.validate()?;
    let (mu, sd) = (law.mean(), law.variance().sqrt());
    let cap = (n as f64).sqrt();
    let mut breaks = vec![mu];
    if p > 2.0 {
        let cross = cap.powf(1.0 / (p - 2.0));
        breaks.extend([mu - sd * cross, mu + sd * cross]);
    }
    let rule = GaussLegendre::new(DEFAULT_QUADRATURE_ORDER);
    Ok(law.expect(
        |x| {
            let a = ((x - mu) / sd).abs();
            a.powf(p).min(cap * a * a)
        },
        &breaks,
        &rule,
    )?)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Central 95% spread of the values; zero for fewer than two values.
fn spread95(mut values: Vec<f64>) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    quantile(&values, 0.975) - quantile(&values, 0.025)
}

struct Measured {
    one_sided: f64,
    two_sided: f64,
    one_spread: f64,
    two_spread: f64,
}

fn classical_sample(law: &ScenarioLaw, n: usize, count: usize, seed: u64, group: u32) -> Result<PathSample<f64>, HarnessError> {
    let (mu, sd) = (law.mean(), law.variance().sqrt());
    let lines = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, stream_id(group, i as u32));
            let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            build_sn_classical(&xs, mu, sd)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathSample::new(Provenance::ClassicalSn, lines)?)
}

fn measure(
    p: &EmpiricalMeasure<f64>,
    q: &EmpiricalMeasure<f64>,
    bootstrap: usize,
    seed: u64,
    group: u32,
) -> Result<Measured, HarnessError> {
    let dm = DistanceMatrix::new(p, q)?;
    let boots: Vec<Result<(f64, f64), HarnessError>> = (0..bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = task_rng(seed, stream_id(group, b as u32));
            let pi: Vec<usize> = (0..p.len()).map(|_| rng.random_range(0..p.len())).collect();
            let qi: Vec<usize> = (0..q.len()).map(|_| rng.random_range(0..q.len())).collect();
            let dm = DistanceMatrix::new(&p.resample(&pi)?, &q.resample(&qi)?)?;
            Ok((one_sided_with(&dm), prokhorov_with(&dm)))
        })
        .collect();
    let boots = boots.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Measured {
        one_sided: one_sided_with(&dm),
        two_sided: prokhorov_with(&dm),
        one_spread: spread95(boots.iter().map(|b| b.0).collect()),
        two_spread: spread95(boots.iter().map(|b| b.1).collect()),
    })
}

fn check_sizes(cfg: &FcltConfig) -> Result<(), HarnessError> {
    if cfg.n.is_empty() {
        return Err(HarnessError::Config("fclt n list must be nonempty".into()));
    }
    if cfg.n.len() > 100 {
        return Err(HarnessError::Config("at most 100 values of n".into()));
    }
    for (what, size) in [("paths", cfg.paths), ("reference_paths", cfg.reference_size())] {
        if size < cfg.min_paths.max(1) {
            return Err(HarnessError::Config(format!(
                "{what} = {size} is below the floor of {}",
                cfg.min_paths.max(1)
            )));
        }
    }
    Ok(())
}

/// Empirical path-space distances between the classical `S_n` and `B_n`
/// against the classical bound, with bootstrap spreads as slack.
pub fn run_classical_fclt_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    const EXP: &str = "fclt";
    let cfg = config
        .fclt
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("configuration has no [fclt] section".into()))?;
    check_sizes(cfg)?;
    let seed = config.seed;
    let mut rows = Vec::new();
    let mut measured = Vec::new();
    for (ni, &n) in cfg.n.iter().enumerate() {
        let g = ni as u32;
        let sn = classical_sample(&cfg.law, n, cfg.paths, seed, groups::FCLT_SN + g)?;
        let bn = simulate_wiener_sample::<f64>(n, cfg.reference_size(), seed, groups::FCLT_BN + g);
        let p = EmpiricalMeasure::from_paths(&sn)?;
        let q = EmpiricalMeasure::from_paths(&bn)?;
        let m = measure(&p, &q, cfg.bootstrap, seed, groups::FCLT_BOOT + g)?;
        let tm = truncated_moment(&cfg.law, n, cfg.p)?;
        let bound = cfg.constant * classical_fclt_bound(n, cfg.p, tm)? / crate::bounds::C3;
        let note = format!("{} S_n paths vs {} B_n paths, truncated moment {tm:.6}", cfg.paths, cfg.reference_size());
        rows.push(
            ReportRow::check(EXP, format!("one-sided n={n}"), m.one_sided, bound, m.one_spread)
                .probability_scale()
                .with_n(n)
                .with_error(m.one_spread)
                .with_note(note.clone()),
        );
        rows.push(
            ReportRow::check(EXP, format!("two-sided n={n}"), m.two_sided, bound, m.two_spread)
                .probability_scale()
                .with_error(m.two_spread)
                .with_n(n)
                .with_note(note),
        );
        if cfg.baseline {
            let other = simulate_wiener_sample::<f64>(n, cfg.paths, seed, groups::FCLT_BASELINE + g);
            let dm = DistanceMatrix::new(&EmpiricalMeasure::from_paths(&other)?, &q)?;
            rows.push(
                ReportRow::info("fclt-baseline", format!("B_n vs B_n one-sided n={n}"), one_sided_with(&dm))
                    .with_n(n)
                    .with_note("sampling floor at equal sample sizes"),
            );
        }
        measured.push((n, m));
    }
    for w in measured.windows(2) {
        let ((n0, a), (n1, b)) = (&w[0], &w[1]);
        rows.push(
            ReportRow::check(
                "fclt-monotone",
                format!("one-sided n={n1} vs n={n0}"),
                b.one_sided,
                a.one_sided,
                a.one_spread.max(b.one_spread),
            )
            .with_n(*n1),
        );
    }
    Ok(ExperimentReport::new("fclt-classical", config, rows))
}
