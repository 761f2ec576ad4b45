use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deconfound"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn simulate(dir: &Path, seed: &str) {
    let out = run(
        &["simulate", "--model", "regression", "--seed", seed, "--n-train", "2000", "--n-test", "2000", "--out", "d.csv"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn adjusted_pipeline_is_deconfounded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "11");
    assert!(run(&["adjust", "--method", "linear-ca", "--train", "d.csv", "--test", "d.csv", "--out-prefix", "c"], d)
        .status
        .success());
    let fit: Value = serde_json::from_str(&fs::read_to_string(d.join("c_fit.json")).unwrap()).unwrap();
    assert_eq!(fit["method"], "linear-ca");

    let out = run(&["train-eval", "--train", "c_train.csv", "--test", "c_test.csv", "--predictions", "p.csv"], d);
    assert!(out.status.success());
    let report = json(&out);
    assert_eq!(report["model"]["kind"], "linear");
    assert!(report["mse"].as_f64().unwrap() > 0.0);

    let out = run(&["diagnose", "--input", "p.csv"], d);
    let report = json(&out);
    assert_eq!(report["confounders"].as_array().unwrap().len(), 2);
    let expect = if report["verdict"] == "deconfounded" { 0 } else { 2 };
    assert_eq!(out.status.code(), Some(expect));
}

#[test]
fn unadjusted_prediction_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "5");
    assert!(run(&["train-eval", "--train", "d.csv", "--test", "d.csv", "--predictions", "p.csv"], d)
        .status
        .success());
    let out = run(&["diagnose", "--input", "p.csv", "--out", "r.json"], d);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "confounded");
}

#[test]
fn simulate_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "9");
    simulate(b.path(), "9");
    assert_eq!(fs::read(a.path().join("d.csv")).unwrap(), fs::read(b.path().join("d.csv")).unwrap());
}

#[test]
fn theory_calculator() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("t.json"),
        r#"{"single": {"gamma": 1.0, "phi": 0.5, "sigma2": 1.0},
            "shift": {"beta_xy": 1.0, "beta_xa": 1.0, "sigma2_x": 1.0, "sigma_aa": 1.0,
                      "sigma_ay": 0.5, "sigma_yy": 1.0, "beta_hat_tr": 0.5}}"#,
    )
    .unwrap();
    let out = run(&["theory", "--params", "t.json"], d);
    assert!(out.status.success());
    let v = json(&out);
    // 1 - g^2 / (s + g^2) with g = s = 1.
    assert!((v["single"]["mse_c"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    // 1 + b^2 (s_x + s_yy) - 2 b s_yy with b = 0.5.
    assert!((v["shift"]["mse_c"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    fs::write(
        d.join("g.json"),
        r#"{"gamma_xy": [0.5], "gamma_xa": [[0.3]], "gamma_ya": [0.4], "cov_a": [[1.0]], "sigma_w": [[0.5]]}"#,
    )
    .unwrap();
    let out = run(&["theory", "--params", "g.json"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["general"]["ca_covariance_at_least_res"][0], true);
    assert!((v["general"]["covariances"]["cov_xc_y"][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn experiment_writes_family_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(
        &["experiment", "--family", "F", "--replications", "2", "--n-train", "500", "--n-test", "500", "--seed", "1", "--out", "o"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["failures"], 0);
    let fam = d.join("o/family_F");
    for f in ["replication_0000.csv", "replication_0001.csv", "summary.json", "plotdata_stability.csv"] {
        assert!(fam.join(f).exists(), "{f} missing");
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(&["experiment", "--family", "F", "--methods", "additive-ca", "--out", "o"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("linear"));
    let out = run(&["experiment", "--family", "Z", "--out", "o"], d);
    assert!(!out.status.success());
    fs::write(d.join("bad.csv"), "y,y_hat\n1,2\n").unwrap();
    assert_eq!(run(&["diagnose", "--input", "bad.csv"], d).status.code(), Some(1));
}
