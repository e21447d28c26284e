use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_milstein-mdp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn summary(dir: &Path, out: &str, cmd: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(out).join(format!("{cmd}.summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn validate_ou_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"model": {"id": "ou"}, "eta": 0.1}"#);
    let out = run(dir.path(), &["validate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "out", "validate");
    assert_eq!(s["results"]["lipschitz_ok"], true);
    assert_eq!(s["pass"], true);
    let csv = std::fs::read_to_string(dir.path().join("out/validate.csv")).unwrap();
    assert!(csv.starts_with("check,ok,worst_excess,x,y\n"));
}

#[test]
fn unresolvable_tails_grid_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"model": {"id": "ou"}, "eta": 0.05, "replicas": 10}"#);
    let out = run(dir.path(), &["tails", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolution"));
    assert!(!dir.path().join("out/tails.csv").exists());
}

#[test]
fn unknown_key_is_config_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", "{\n  \"model\": {\"id\": \"ou\"},\n  \"eta\": 0.1,\n  \"stepz\": 3\n}\n");
    let out = run(dir.path(), &["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stepz") && err.contains("line 4"), "{err}");
}

#[test]
fn reruns_are_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"model": {"id": "ou"}, "eta": [0.2, 0.1], "replicas": 64, "master_seed": 7,
            "stein": {"intervals": 4096}}"#,
    );
    let a = run(dir.path(), &["simulate", "--config", &cfg, "--set", "output_dir=a", "--threads", "1"]);
    let b = run(dir.path(), &["simulate", "--config", &cfg, "--set", "output_dir=b", "--threads", "3"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    let ca = std::fs::read(dir.path().join("a/simulate.csv")).unwrap();
    let cb = std::fs::read(dir.path().join("b/simulate.csv")).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(String::from_utf8_lossy(&ca).lines().count(), 1 + 2 * 64);
}

#[test]
fn embedded_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"model": {"id": "tanh1d"}, "h": {"id": "gauss-bump"}, "eta": 0.1, "replicas": 32,
            "master_seed": 11, "output_dir": "first"}"#,
    );
    assert_eq!(run(dir.path(), &["simulate", "--config", &cfg]).status.code(), Some(0));
    let first = summary(dir.path(), "first", "simulate");
    let mut embedded = first["config"].clone();
    embedded["output_dir"] = "second".into();
    let again = write(dir.path(), "again.json", &embedded.to_string());
    assert_eq!(run(dir.path(), &["simulate", "--config", &again]).status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("first/simulate.csv")).unwrap(),
        std::fs::read(dir.path().join("second/simulate.csv")).unwrap()
    );
    let second = summary(dir.path(), "second", "simulate");
    assert_eq!(first["results"]["pi_h"], second["results"]["pi_h"]);
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"model": {"id": "ou"}, "eta": 0.05, "replicas": 100}"#);
    let out = run(dir.path(), &["clt", "--config", &cfg, "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    let plan: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["plan"]["steps"][0], 400);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn multi_dimensional_model_rejected_by_one_d_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"model": {"id": "tanhNd", "params": {"dim": 3}}, "eta": 0.1}"#);
    let out = run(dir.path(), &["stein", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
