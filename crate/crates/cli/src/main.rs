use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sublinear_clt::bounds::{bound_table, BoundInputs};
use sublinear_clt::harness::{
    emit_report, gaussian_kernel_suite, kernel_suite, run_classical_fclt_experiment, run_thm1_experiment,
    run_verify_lemmas, ExperimentConfig, ExperimentReport, ReportFormat,
};
use sublinear_clt::prokhorov::{one_sided_with, prokhorov_with, read_atoms_csv, DistanceMatrix, Metric};
use sublinear_clt::scenario::{gamma_p_sup, moment_envelope, ScenarioFamily};

#[derive(Parser, Debug)]
#[command(name = "sublinear-clt", version, about = "Rate-bound verification harness for CLTs under sublinear expectations")]
struct Cli {
    /// TOML configuration; without it every experiment runs with defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report directory (overrides the configuration; default `reports`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// DP grid points for the theorem experiment.
    #[arg(long, global = true)]
    grid_size: Option<usize>,
    /// Mollifier widths for the theorem experiment, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print every bound for one (n, eps, p) and the configured family.
    Bounds(BoundsArgs),
    /// Run all lemma suites.
    VerifyLemmas,
    /// Run only the kernel and Gaussian-kernel suites.
    VerifyKernels,
    /// DP upper probability against the Gaussian neighbourhood and the bounds.
    Thm1,
    /// Classical functional CLT: empirical path-space Prokhorov distances.
    FcltClassical,
    /// Distances between two empirical measures stored as CSV atom files.
    Prokhorov(ProkhorovArgs),
    /// Re-emit a saved JSON report in another format.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    /// Lipschitz constant of the functional (with `--l`).
    #[arg(long, requires = "l")]
    k: Option<f64>,
    #[arg(long, requires = "k")]
    l: Option<f64>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MetricArg {
    Abs,
    Sup,
}

#[derive(Args, Debug)]
struct ProkhorovArgs {
    p: PathBuf,
    q: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Sup)]
    metric: MetricArg,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// JSON report written by an earlier run.
    input: PathBuf,
    /// csv, json or svg.
    #[arg(long, default_value = "svg")]
    format: String,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(t) = config.thm1.as_mut() {
        if let Some(m) = cli.grid_size {
            t.grid_size = m;
        }
        if let Some(eta) = &cli.eta {
            t.eta = eta.clone();
        }
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.clone().unwrap_or_else(|| PathBuf::from("reports"))
}

/// Writes all formats, prints one line per row and returns whether every
/// check passed.
fn finish(report: &ExperimentReport, dir: &Path) -> anyhow::Result<bool> {
    for format in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Svg] {
        emit_report(report, format, dir)?;
    }
    for r in &report.rows {
        let status = if !r.pass {
            "FAIL"
        } else if r.vacuous {
            "VAC "
        } else {
            "ok  "
        };
        println!(
            "{status} {:<20} {:<44} observed={:<12.6e} bound={:<12.6e} slack={:.1e}",
            r.experiment, r.case, r.observed, r.bound, r.slack
        );
    }
    let failed = report.failures().count();
    println!(
        "{}: {} rows, {failed} failed; reports in {}",
        report.name,
        report.rows.len(),
        dir.display()
    );
    Ok(failed == 0)
}

fn run_bounds(config: &ExperimentConfig, args: &BoundsArgs) -> anyhow::Result<bool> {
    let laws = config.family.clone().context("no scenario family configured")?;
    let family = ScenarioFamily::new(laws)?;
    let env = moment_envelope(&family, 256)?;
    let gamma = gamma_p_sup(&family, &env, args.eps * (args.n as f64).sqrt(), args.p, 64)?;
    let gamma3 = gamma_p_sup(&family, &env, f64::INFINITY, 3.0, 64)?;
    let mut inp = BoundInputs::new(args.n, args.eps, args.p, gamma)?;
    if let (Some(k), Some(l)) = (args.k, args.l) {
        inp = inp.with_lipschitz(k, l)?;
    }
    let table = bound_table(&inp, gamma3)?;
    match args.format {
        TableFormat::Json => println!("{}", serde_json::to_string_pretty(&table)?),
        TableFormat::Csv => {
            let json = serde_json::to_value(&table)?;
            let obj = json.as_object().expect("table is an object");
            println!("{}", obj.keys().cloned().collect::<Vec<_>>().join(","));
            let vals: Vec<String> = obj
                .values()
                .map(|v| if v.is_null() { String::new() } else { v.to_string() })
                .collect();
            println!("{}", vals.join(","));
        }
    }
    Ok(true)
}

fn run_prokhorov(args: &ProkhorovArgs) -> anyhow::Result<bool> {
    let metric = match args.metric {
        MetricArg::Abs => Metric::AbsoluteDifference,
        MetricArg::Sup => Metric::SupNorm,
    };
    let open = |p: &Path| -> anyhow::Result<_> {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        Ok(read_atoms_csv(BufReader::new(f), metric)?)
    };
    let (p, q) = (open(&args.p)?, open(&args.q)?);
    let dm = DistanceMatrix::new(&p, &q)?;
    let out = serde_json::json!({
        "atoms_p": p.len(),
        "atoms_q": q.len(),
        "one_sided_p_q": one_sided_with(&dm),
        "one_sided_q_p": one_sided_with(&dm.transpose()),
        "prokhorov": prokhorov_with(&dm),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(true)
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(w) = cli.workers {
        if w == 0 {
            bail!("--workers must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    let config = load_config(cli)?;
    let dir = out_dir(&config);
    match &cli.command {
        Command::Bounds(args) => run_bounds(&config, args),
        Command::VerifyLemmas => finish(&run_verify_lemmas(&config)?, &dir),
        Command::VerifyKernels => {
            let cfg = config.lemmas.as_ref().context("configuration has no [lemmas] section")?;
            let mut rows = kernel_suite(cfg)?;
            rows.extend(gaussian_kernel_suite(cfg, config.seed)?);
            finish(&ExperimentReport::new("verify-kernels", &config, rows), &dir)
        }
        Command::Thm1 => finish(&run_thm1_experiment(&config)?, &dir),
        Command::FcltClassical => finish(&run_classical_fclt_experiment(&config)?, &dir),
        Command::Prokhorov(args) => run_prokhorov(args),
        Command::Report(args) => {
            let report = ExperimentReport::load_json(&args.input)?;
            let format: ReportFormat = args.format.parse()?;
            let path = emit_report(&report, format, &dir)?;
            println!("{}", path.display());
            Ok(report.all_pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
