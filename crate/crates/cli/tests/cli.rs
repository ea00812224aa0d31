use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sublinear-clt"))
}

#[test]
fn bounds_prints_a_table() {
    let out = bin()
        .args(["bounds", "--n", "100", "--eps", "0.5", "--p", "3", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 100);
    assert!(v["thm1_b22"].as_f64().unwrap() > 0.0);
    assert!(v["cor2"].is_null());

    let csv = bin()
        .args(["bounds", "--n", "16", "--eps", "1", "--k", "2", "--l", "3"])
        .output()
        .unwrap();
    assert!(csv.status.success());
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().next().unwrap().contains("cor2"));
}

#[test]
fn prokhorov_between_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let (p, q) = (dir.path().join("p.csv"), dir.path().join("q.csv"));
    std::fs::write(&p, "x\n0.0\n1.0\n").unwrap();
    std::fs::write(&q, "x\n0.0\n3.0\n").unwrap();
    let out = bin()
        .args(["prokhorov", p.to_str().unwrap(), q.to_str().unwrap(), "--metric", "abs"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["prokhorov"].as_f64().unwrap(), 0.5);
}

#[test]
fn exit_codes_follow_check_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(
        &good,
        "seed = 5\nfamily = [{ kind = \"gaussian\", mean = 0.0, sd = 1.0 }]\n[thm1]\nn = [4]\neps = [1.0]\ntargets = [[[0.0, 1.0]]]\ngrid_size = 1025\nlaw_nodes = 256\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let run = |cfg: &std::path::Path, cmd: &str, extra: &[&str]| {
        bin()
            .args([cmd, "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--workers", "2"])
            .args(extra)
            .output()
            .unwrap()
    };
    let ok = run(&good, "thm1", &["--eta", "0.2,0.1"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    for ext in ["csv", "json", "svg"] {
        assert!(out_dir.join(format!("thm1.{ext}")).exists());
    }
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("thm1.json")).unwrap()).unwrap();
    assert_eq!(saved["config"]["thm1"]["eta"], serde_json::json!([0.2, 0.1]));

    // the section is missing: usage error
    let missing = run(&good, "verify-lemmas", &[]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[lemmas]\nkernel_constant = 15.0\n").unwrap();
    let failing = run(&bad, "verify-kernels", &[]);
    assert_eq!(failing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&failing.stdout).contains("FAIL kernel"));

    let re = bin()
        .args(["report", out_dir.join("thm1.json").to_str().unwrap(), "--format", "csv", "--out"])
        .arg(dir.path().join("again"))
        .output()
        .unwrap();
    assert_eq!(re.status.code(), Some(0));
    assert!(dir.path().join("again/thm1.csv").exists());
}
