use std::fs;
use std::path::Path;

use assert_cmd::Command;
use serde_json::Value;

fn kinfer() -> Command {
    Command::cargo_bin("kinfer").unwrap()
}

fn run_json(args: &[&str]) -> Value {
    let out = kinfer().args(args).assert().success().get_output().stdout.clone();
    serde_json::from_slice(&out).unwrap()
}

fn death_data(dir: &Path) -> String {
    let d = dir.join("d");
    kinfer()
        .args([
            "generate-data",
            "--model",
            "builtin:pure-death",
            "--times",
            "0:4:1",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&d)
        .assert()
        .success();
    d.join("data.csv").to_string_lossy().into_owned()
}

#[test]
fn generated_data_has_header_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = death_data(tmp.path());
    let text = fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().next(), Some("time,X"));
    assert_eq!(text.lines().count(), 6);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("d/data.json")).unwrap()).unwrap();
    assert_eq!(manifest["sigma"], 2.0);
    assert!(tmp.path().join("d/latent.csv").exists());
}

#[test]
fn partially_observed_regime_leaves_predator_cells_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lv");
    kinfer()
        .args(["generate-data", "--regime", "D1_up", "--seed", "5", "--out"])
        .arg(&out)
        .assert()
        .success();
    let text = fs::read_to_string(out.join("data.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("time,prey,predator"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("data.json")).unwrap()).unwrap();
    assert_eq!(manifest["sigma"], "unknown");
}

#[test]
fn oracle_posterior_matches_pmcmc_roughly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = death_data(tmp.path());
    let grid = run_json(&[
        "oracle",
        "--model",
        "builtin:pure-death",
        "--data",
        &data,
        "--param",
        "0",
    ]);
    let run = tmp.path().join("p");
    let summary = run_json(&[
        "pmcmc",
        "--model",
        "builtin:pure-death",
        "--data",
        &data,
        "--budget",
        "20000",
        "--reference-particles",
        "5",
        "--reference-iterations",
        "200",
        "--out",
        run.to_str().unwrap(),
    ]);
    let mean = summary["pmcmc"]["mean"][0].as_f64().unwrap();
    let sd = grid["sd"].as_f64().unwrap();
    assert!((mean - grid["mean"].as_f64().unwrap()).abs() < sd, "{mean} vs {grid}");
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next(),
        Some("iteration,cumulative_budget,log_theta_1,log_estimate,accepted")
    );
}

#[test]
fn model_file_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("death.json");
    fs::write(
        &model,
        r#"{"name": "death", "species": ["X"], "reactions": [{"reactants": {"X": 1}}],
            "theta": [0.5], "x0": [20], "sigma": 2.0,
            "rate_prior": [{"kind": "uniform", "lo": -3, "hi": 1}]}"#,
    )
    .unwrap();
    let data = death_data(tmp.path());
    let from_file = run_json(&["oracle", "--model", model.to_str().unwrap(), "--data", &data]);
    let builtin = run_json(&["oracle", "--model", "builtin:pure-death", "--data", &data]);
    assert_eq!(from_file["log_likelihood"], builtin["log_likelihood"]);
}

#[test]
fn compare_then_diagnose_recomputes_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let data = death_data(tmp.path());
    let run = tmp.path().join("c");
    let args = |workers: &str, out: &Path| {
        vec![
            "compare".to_string(),
            "--model=builtin:pure-death".into(),
            format!("--data={data}"),
            "--budget=8000".into(),
            "--population=100".into(),
            "--n-pilot=200".into(),
            "--reference-particles=5".into(),
            "--reference-iterations=100".into(),
            format!("--workers={workers}"),
            format!("--out={}", out.display()),
        ]
    };
    kinfer().args(args("1", &run)).assert().success();
    for f in [
        "config.json",
        "ledger.json",
        "trace.csv",
        "summary.json",
        "brackets.csv",
        "populations/manifest.json",
    ] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    kinfer()
        .args(["diagnose", "--check", "--run"])
        .arg(&run)
        .assert()
        .success();

    let other = tmp.path().join("c2");
    kinfer().args(args("3", &other)).assert().success();
    assert_eq!(
        fs::read(run.join("trace.csv")).unwrap(),
        fs::read(other.join("trace.csv")).unwrap()
    );
    assert_eq!(
        fs::read(run.join("populations/gen_0.csv")).unwrap(),
        fs::read(other.join("populations/gen_0.csv")).unwrap()
    );

    let summary = run.join("summary.json");
    let tampered = fs::read_to_string(&summary).unwrap().replacen('1', "2", 1);
    fs::write(&summary, tampered).unwrap();
    kinfer()
        .args(["diagnose", "--check", "--run"])
        .arg(&run)
        .assert()
        .failure();
}

#[test]
fn abc_reject_writes_one_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = death_data(tmp.path());
    let out = tmp.path().join("r");
    let summary = run_json(&[
        "abc-reject",
        "--model",
        "builtin:pure-death",
        "--data",
        &data,
        "--budget",
        "20000",
        "--epsilon",
        "40",
        "--population",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(summary["abc"]["generations"], 1);
    assert!(out.join("populations/gen_0.csv").exists());
}

#[test]
fn errors_exit_nonzero() {
    kinfer()
        .args(["simulate", "--model", "builtin:nope", "--out", "/tmp/unused"])
        .assert()
        .failure();
    kinfer()
        .args(["pmcmc", "--model", "builtin:pure-death"])
        .assert()
        .failure();
}
