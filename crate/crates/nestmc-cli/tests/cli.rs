//! Black-box tests for the `nestmc` binary: exit codes, output schemas,
//! and reproducibility of seeded runs.

use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn nestmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is a JSON record")
}

#[test]
fn estimate_is_reproducible_and_reports_both_measures() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "estimate.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "n": 500, "m": 50, "seed": 42}"#,
    );
    let a = stdout_json(&nestmc(&["estimate", "--config", &config]));
    let b = stdout_json(&nestmc(&["estimate", "--config", &config]));
    assert_eq!(a["estimates"], b["estimates"], "seeded rerun must match");
    assert_eq!(a["seed"], 42);
    let kinds: Vec<&str> = a["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"var") && kinds.contains(&"cvar"));
    assert!(a["mean_response"]["mean"].as_f64().unwrap().is_finite());
}

#[test]
fn seed_flag_overrides_config_and_changes_output() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "estimate.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "n": 500, "m": 50, "seed": 42}"#,
    );
    let a = stdout_json(&nestmc(&["estimate", "--config", &config]));
    let b = stdout_json(&nestmc(&["estimate", "--config", &config, "--seed", "43"]));
    assert_eq!(b["seed"], 43);
    assert_ne!(a["estimates"], b["estimates"]);
}

#[test]
fn missing_model_is_a_config_error_with_exit_code_2() {
    let dir = tempdir().unwrap();
    let config = write_config(&dir, "bad.json", r#"{"alpha": 0.95, "n": 100, "m": 30}"#);
    let out = nestmc(&["estimate", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("model"), "stderr names the field: {stderr}");
}

#[test]
fn unknown_config_field_is_rejected_with_its_path() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "bad.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "n": 100, "m": 30, "bogus": 1}"#,
    );
    let out = nestmc(&["estimate", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn explicit_sizes_and_budget_block_are_mutually_exclusive() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "bad.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "n": 100, "m": 30,
            "beta": 0.05, "budget": {"cb": 1e4}}"#,
    );
    let out = nestmc(&["estimate", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_budget_exits_with_code_4() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "budget.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "beta": 0.05,
            "target": "var", "seed": 7,
            "budget": {"cb": 100, "pilot_n": 30, "pilot_m": 30}}"#,
    );
    let out = nestmc(&["budget", "--config", &config]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn ci_command_writes_csv_with_stable_schema() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "ci.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "beta": 0.05,
            "procedure": "weak", "n": 212, "m": 47, "seed": 5}"#,
    );
    let out_path = dir.path().join("ci.csv");
    let out = nestmc(&[
        "ci",
        "--config",
        &config,
        "--out",
        out_path.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "procedure,target,alpha,n,m,center,lower,upper,half_width,seed"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2, "one row per target: {csv}");
    for row in rows {
        assert_eq!(row.split(',').count(), 10);
    }
}

#[test]
fn budget_command_emits_grid_rows() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "budget.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "beta": 0.05,
            "target": "var", "seed": 7, "budget": {"cb": 1e4}}"#,
    );
    let out_path = dir.path().join("grid.csv");
    let out = nestmc(&[
        "budget",
        "--config",
        &config,
        "--out",
        out_path.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let record = stdout_json(&out);
    let plan = &record["budget_plans"][0];
    assert_eq!(plan["target"], "var");
    assert!(plan["n"].as_u64().unwrap() >= 30);
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with("target,n,m,predicted_width\n"));
    assert!(csv.lines().count() > 5);
}

#[test]
fn gen_data_roundtrips_through_an_mm1_run() {
    let dir = tempdir().unwrap();
    let x = dir.path().join("x.txt");
    let y = dir.path().join("y.txt");
    let out = nestmc(&[
        "gen-data",
        "--lambda0",
        "50",
        "--mu0",
        "500",
        "--n",
        "200",
        "--out-x",
        x.to_str().unwrap(),
        "--out-y",
        y.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&x).unwrap().lines().count(), 200);

    let config = write_config(
        &dir,
        "mm1.json",
        &format!(
            r#"{{"model": {{"name": "mm1", "data_x": "{}", "data_y": "{}"}},
                "alpha": 0.9, "n": 200, "m": 30, "seed": 1}}"#,
            x.to_str().unwrap(),
            y.to_str().unwrap()
        ),
    );
    let record = stdout_json(&nestmc(&["estimate", "--config", &config]));
    for e in record["estimates"].as_array().unwrap() {
        let v = e["value"].as_f64().unwrap();
        assert!(v > 0.0 && v.is_finite());
    }
}

#[test]
fn coverage_command_rejects_models_without_truth() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "cov.json",
        r#"{"model": {"name": "mm1", "lambda0": 50, "mu0": 500, "n_data": 100},
            "alpha": 0.95, "beta": 0.05, "procedure": "strong",
            "n": 100, "m": 30, "replications": 5, "seed": 3}"#,
    );
    let out = nestmc(&["coverage", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coverage_command_reports_fraction_and_csv() {
    let dir = tempdir().unwrap();
    let config = write_config(
        &dir,
        "cov.json",
        r#"{"model": {"name": "normal-normal"}, "alpha": 0.95, "beta": 0.05,
            "procedure": "weak", "target": "var", "n": 212, "m": 47,
            "replications": 20, "seed": 3}"#,
    );
    let out_path = dir.path().join("cov.csv");
    let record = stdout_json(&nestmc(&[
        "coverage",
        "--config",
        &config,
        "--out",
        out_path.to_str().unwrap(),
    ]));
    let cov = record["coverage"][0]["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&cov));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    assert!(csv.starts_with("procedure,target,alpha,n,m,replications,coverage"));
}
