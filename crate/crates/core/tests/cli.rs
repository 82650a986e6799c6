use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use quasr::cli::read_theta_json;

fn quasr(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_quasr")).args(args).output().unwrap().status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--graph", "tree", "--d", "10", "--n", "200", "--seed", "4", "--out", s(&out)];
    args.extend_from_slice(extra);
    assert_eq!(quasr(&args), 0);
    out
}

#[test]
fn simulate_writes_a_tree_with_d_minus_one_edges() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "sim", &[]);
    let edges = fs::read_to_string(out.join("truth_edges.csv")).unwrap();
    assert_eq!(edges.lines().count(), 1 + 9);
    assert!(out.join("precision.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = fs::read(simulate(dir.path(), "a", &[]).join("data.csv")).unwrap();
    let b = fs::read(simulate(dir.path(), "b", &[]).join("data.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn copula_values_stay_inside_the_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "cop", &["--copula"]);
    let m = quasr::cli::read_matrix_csv(&out.join("data.csv")).unwrap();
    assert!(m.iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn lambda_above_start_gives_the_zero_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sim", &[]);
    let out = dir.path().join("fit");
    assert_eq!(quasr(&["fit", s(&sim.join("data.csv")), "--lambda", "1.5", "--standardize", "--out", s(&out)]), 0);
    let (theta, file) = read_theta_json(&out.join("theta.json")).unwrap();
    assert_eq!(theta.max_abs(), 0.0);
    assert_eq!(file.lambda, 1.5);
    assert_eq!(fs::read_to_string(out.join("edges.csv")).unwrap().lines().count(), 1);
}

#[test]
fn malformed_csv_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "1.0,2.0\n3.0,oops\n").unwrap();
    let out = dir.path().join("fit");
    assert_eq!(quasr(&["fit", s(&input), "--lambda", "0.1", "--out", s(&out)]), 2);
    assert!(!out.exists());
    assert_eq!(quasr(&["simulate", "--d", "0", "--n", "5", "--out", s(&out)]), 2);
}

#[test]
fn legendre_path_reports_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let train = simulate(dir.path(), "train", &["--copula"]);
    let out_h = dir.path().join("hold");
    assert_eq!(quasr(&["simulate", "--d", "10", "--n", "200", "--seed", "5", "--copula", "--out", s(&out_h)]), 0);
    let out = dir.path().join("fit");
    let code = quasr(&[
        "fit",
        s(&train.join("data.csv")),
        "--basis",
        "legendre",
        "--m1",
        "3",
        "--m2",
        "2",
        "--path",
        "--grid-count",
        "8",
        "--holdout",
        s(&out_h.join("data.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    let entries = diag["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 8);
    assert!(entries.iter().all(|e| e["holdout_score"].is_number()));
}

#[test]
fn experiment_with_one_rep_writes_one_metrics_row() {
    let dir = tempfile::tempdir().unwrap();
    let desc = dir.path().join("exp.json");
    fs::write(
        &desc,
        r#"{"name":"one","graph":{"kind":"random_spanning_tree","d":8},"n":80,"n_holdout":80,"reps":1,"seed":3}"#,
    )
    .unwrap();
    let out = dir.path().join("exp");
    assert_eq!(quasr(&["experiment", "--config", s(&desc), "--out", s(&out)]), 0);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    let roc = fs::read_to_string(out.join("roc.csv")).unwrap();
    let first: Vec<&str> = roc.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[3], "0");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let tp = summary["tp_mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&tp));
}

#[test]
fn invalid_descriptor_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let desc = dir.path().join("exp.json");
    fs::write(&desc, r#"{"reps": 0}"#).unwrap();
    assert_eq!(quasr(&["experiment", "--config", s(&desc), "--out", s(&dir.path().join("o"))]), 2);
}
