use sublinear_clt::harness::{
    emit_report, run_classical_fclt_experiment, run_thm1_experiment, run_verify_lemmas, ExperimentConfig,
    ExperimentReport, FcltConfig, HarnessError, LemmaConfig, ReportFormat, Thm1Config,
};
use sublinear_clt::smoothfields::IntervalUnionSet;

fn small_lemmas() -> ExperimentConfig {
    ExperimentConfig {
        seed: 11,
        thm1: None,
        fclt: None,
        lemmas: Some(LemmaConfig {
            y_points: 30,
            gaussian_sets: 3,
            gaussian_scales: vec![0.5],
            field_sets: 2,
            field_n: vec![4],
            families: 6,
            maximal_paths: 3000,
            maximal_n: vec![4, 16],
            dp_instances: 3,
            dp_mc_paths: 3000,
            dp_mc_n: vec![4],
            ..LemmaConfig::default()
        }),
        ..ExperimentConfig::default()
    }
}

fn small_thm1() -> ExperimentConfig {
    ExperimentConfig {
        lemmas: None,
        fclt: None,
        thm1: Some(Thm1Config {
            n: vec![4, 8],
            eps: vec![0.75, 1.0],
            targets: vec![IntervalUnionSet::new(vec![(0.5, 1.5)]).unwrap()],
            eta: vec![0.2],
            grid_size: 1025,
            law_nodes: 256,
            ..Thm1Config::default()
        }),
        ..ExperimentConfig::default()
    }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

#[test]
fn reports_are_byte_identical_across_worker_counts() {
    let cfg = small_lemmas();
    let a = pool(1).install(|| run_verify_lemmas(&cfg)).unwrap();
    let b = pool(3).install(|| run_verify_lemmas(&cfg)).unwrap();
    assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());

    let mut fc = ExperimentConfig {
        lemmas: None,
        thm1: None,
        ..ExperimentConfig::default()
    };
    fc.fclt = Some(FcltConfig {
        n: vec![8],
        paths: 25,
        reference_paths: Some(50),
        bootstrap: 5,
        min_paths: 10,
        ..FcltConfig::default()
    });
    let a = pool(1).install(|| run_classical_fclt_experiment(&fc)).unwrap();
    let b = pool(4).install(|| run_classical_fclt_experiment(&fc)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn different_seeds_change_sampled_rows() {
    let a = run_verify_lemmas(&small_lemmas()).unwrap();
    let mut cfg = small_lemmas();
    cfg.seed = 12;
    let b = run_verify_lemmas(&cfg).unwrap();
    let mc = |r: &ExperimentReport| {
        r.rows_for("maximal-inequality").map(|row| row.observed).collect::<Vec<_>>()
    };
    assert_ne!(mc(&a), mc(&b));
    assert_ne!(a.config_hash, b.config_hash);
}

#[test]
fn emitted_files_roundtrip_and_plot_one_series_per_eps() {
    let cfg = small_thm1();
    let report = run_thm1_experiment(&cfg).unwrap();
    assert!(report.all_pass());
    let dir = tempfile::tempdir().unwrap();
    let json = emit_report(&report, ReportFormat::Json, dir.path()).unwrap();
    assert_eq!(ExperimentReport::load_json(&json).unwrap(), report);
    let svg = std::fs::read_to_string(emit_report(&report, ReportFormat::Svg, dir.path()).unwrap()).unwrap();
    assert_eq!(svg.matches(r#"<g class="series""#).count(), 2);
    assert!(svg.contains(r#"data-eps="0.75""#) && svg.contains(r#"data-eps="1""#));
    let csv1 = std::fs::read(emit_report(&report, ReportFormat::Csv, dir.path()).unwrap()).unwrap();
    let again = run_thm1_experiment(&cfg).unwrap();
    let csv2 = again.to_csv_string().unwrap().into_bytes();
    assert_eq!(csv1, csv2);
}

#[test]
fn toml_file_configures_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        r#"
seed = 99
family = [{ kind = "gaussian", mean = 0.0, sd = 1.0 }]

[thm1]
n = [4]
eps = [1.0]
targets = [[[-inf, 0.0]]]
eta = [0.1]
grid_size = 1025
law_nodes = 256
"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.seed, 99);
    let report = run_thm1_experiment(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.seed, 99);
    assert!(matches!(run_verify_lemmas(&cfg), Err(HarnessError::Usage(_))));
    assert!(ExperimentConfig::load(&dir.path().join("missing.toml")).is_err());
}

#[test]
fn corrupted_kernel_constant_is_reported() {
    let mut cfg = small_lemmas();
    cfg.lemmas.as_mut().unwrap().kernel_constant = 15.0;
    let report = run_verify_lemmas(&cfg).unwrap();
    assert!(report
        .failures()
        .any(|r| r.experiment == "kernel" && r.case.starts_with("remainder")));
}
