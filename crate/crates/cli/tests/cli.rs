use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const WISHART1: &str = r#"{"alpha": 1.0, "beta": 1, "entry_law": "gaussian", "rho": {"atoms": [[1.0, 1.0]]}}"#;
const DEGENERATE: &str = r#"{"alpha": 0.5, "rho": {"atoms": [[-1.0, 1.0]]}}"#;
const GOE: &str = r#"{"kind": "deformed-wigner", "deformation": {"atoms": [[0.0, 1.0]]}}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmtldp"))
}

fn write_model(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn edge_json_for_wishart() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "wishart1.json", WISHART1);
    let out = run(&["edge", "--model", m.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["theta_max"], 1.0);
    assert_eq!(v["x_c"], "inf");
    assert!((v["theta_c"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((v["r_sigma"].as_f64().unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(v["degenerate"], false);
}

#[test]
fn rate_csv_starts_at_the_edge() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "wishart1.json", WISHART1);
    let csv = dir.path().join("rate.csv");
    let out = run(&[
        "rate", "--model", m.to_str().unwrap(), "--xmax", "6", "--points", "100", "--out", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,G,Gbar,I"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!((first[0] - 4.0).abs() < 1e-12);
    assert_eq!(first[3], 0.0);
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn mc_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "wishart1.json", WISHART1);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, threads) in [(&a, "1"), (&b, "3")] {
        let out = run(&[
            "--threads", threads, "mc", "--model", m.to_str().unwrap(), "--n", "200", "--replicas", "100", "--seed", "7",
            "--out", path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 101);
}

#[test]
fn degenerate_rate_exits_one_and_points_to_edge() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "neg.json", DEGENERATE);
    let out = run(&["rate", "--model", m.to_str().unwrap(), "--xmax", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate=true"));
    let edge = run(&["edge", "--model", m.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&edge.stdout).unwrap();
    assert_eq!(v["degenerate"], true);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_model(dir.path(), "bad.json", "{ not json");
    assert_eq!(run(&["edge", "--model", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let goe = write_model(dir.path(), "goe.json", GOE);
    assert_eq!(run(&["edge", "--model", goe.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn wigner_rate_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "goe.json", GOE);
    let out = run(&["wigner-rate", "--model", m.to_str().unwrap(), "--xmax", "3", "--points", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!((last[3] - 0.7146273).abs() < 1e-6, "{text}");
}

#[test]
fn density_and_approx_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "wishart1.json", WISHART1);
    let out = run(&["density", "--model", m.to_str().unwrap(), "--points", "21"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 22);
    let out = run(&["approx", "--model", m.to_str().unwrap(), "--eps", "0.3,0.1", "--xmax", "8", "--points", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("eps,r_sigma_eps,sup_error\n"));
    let out = run(&["approx", "--model", m.to_str().unwrap(), "--eps", "0.1,0.3"]);
    assert_eq!(out.status.code(), Some(2));
}
