use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run_with(config: &str, extra: &[&str], env: &[(&str, &str)]) -> (TempDir, Output) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_conflap"));
    cmd.arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("out")).args(extra);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (dir, out)
}

fn run(config: &str) -> (TempDir, Output) {
    run_with(config, &[], &[])
}

fn out_file(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join("out").join(name)
}

fn report(dir: &TempDir) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out_file(dir, "report.json")).unwrap()).unwrap()
}

fn table(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(rows: &[csv::StringRecord], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn maximize_reports_closed_form_value() {
    let (dir, out) = run(r#"{"backend": {"kind": "torus", "grid": [16, 16, 16]}, "curvature": 6, "task": "maximize"}"#);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(&dir);
    let lambda = rep["result"]["Lambda1"].as_f64().unwrap();
    assert!((lambda - 6.0 * PI.powi(3)).abs() <= 1e-8);
    assert_eq!(rep["status"], "ok");
    assert_eq!(rep["toolkit"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(rep["config"]["backend"]["grid"][0], 16);
    assert_eq!(rep["config"]["tolerances"]["solver"]["solver_tol"], 1e-9);
    assert_eq!(rep["class"]["nodes"], 4096);
    let vol = rep["class"]["total_volume"].as_f64().unwrap();
    assert!((vol - 8.0 * PI.powi(3)).abs() < 1e-10);
}

#[test]
fn certify_with_sign_changing_curvature_exits_2() {
    let (dir, out) = run(r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": "1 + 2*sin(x1)", "task": "certify", "k": 1}"#);
    assert_eq!(out.status.code(), Some(2));
    let rep = report(&dir);
    assert_eq!(rep["status"], "hypothesis_violation");
    assert_eq!(rep["error"]["hypothesis"], "necessary_condition_sign");
}

#[test]
fn derivative_inside_a_cluster_exits_2() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": 6, "task": "derivative", "k": 3,
        "direction": {"kind": "field", "field": "sin(x1)"}}"#;
    let (dir, out) = run(cfg);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&dir)["error"]["hypothesis"], "gap_condition");
}

#[test]
fn certify_maximizer_is_feasible() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": 6, "task": "certify", "factor": {"kind": "maximizer"}}"#;
    let (dir, out) = run(cfg);
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&dir);
    assert_eq!(rep["result"]["certificate"]["feasible"], true);
    assert!(rep["result"]["for_eigen"]["sup"].as_f64().unwrap() <= 1e-9);
    assert!(rep["result"]["harmonic_map"]["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn derivative_with_finite_differences() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [8, 8, 8]}, "curvature": 6, "task": "derivative",
        "factor": {"kind": "sample", "index": 2}, "finite_differences": true,
        "direction": {"kind": "field", "field": "cos(x1) + 0.5*sin(x2)"}}"#;
    let (dir, out) = run(cfg);
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&dir);
    let formula = rep["result"]["report"]["f_right"].as_f64().unwrap();
    let fd = rep["result"]["finite_differences"]["f_right"].as_f64().unwrap();
    assert!((formula - fd).abs() <= 1e-3 * fd.abs(), "{formula} vs {fd}");
}

#[test]
fn scale_sweep_is_flat() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [8, 8, 8]}, "curvature": 6, "task": "sweep",
        "factor": {"kind": "field", "field": "exp(0.2*cos(x1) + 0.1*sin(x3))"},
        "sweep": {"axis": "scale", "values": [0.5, 1, 2, 10]}}"#;
    let (dir, out) = run(cfg);
    assert_eq!(out.status.code(), Some(0));
    let rows = table(&out_file(&dir, "sweep.csv"));
    assert_eq!(rows.len(), 4);
    let f = column(&rows, 6);
    assert!(f.iter().all(|v| (v - f[0]).abs() <= 1e-10 * f[0].abs()), "{f:?}");
    assert_eq!(&rows[0][7], "");
}

#[test]
fn seed_sweep_stays_below_maximum() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [8, 8, 8]}, "curvature": 6, "task": "sweep",
        "sweep": {"axis": "seed", "from": 1, "to": 200}}"#;
    let (dir, out) = run(cfg);
    assert_eq!(out.status.code(), Some(0));
    let rows = table(&out_file(&dir, "sweep.csv"));
    assert_eq!(rows.len(), 200);
    let max = column(&rows, 6).into_iter().fold(f64::MIN, f64::max);
    assert!(max <= 6.0 * PI.powi(3) + 1e-8);
}

/// One-sided quotients carry an O(t) error; the average of the quotients at
/// `t` and `−t` removes it for a simple eigenvalue.
#[test]
fn t_sweep_reproduces_derivative() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [8, 8, 8]}, "curvature": 6, "task": "sweep",
        "factor": {"kind": "sample", "index": 0},
        "direction": {"kind": "field", "field": "cos(x1) + 0.5*sin(x2)"},
        "sweep": {"axis": "t", "values": [0.001, 0.0005, -0.0005, -0.001]}}"#;
    let (dir, out) = run(cfg);
    assert_eq!(out.status.code(), Some(0));
    let rows = table(&out_file(&dir, "sweep.csv"));
    let dq = column(&rows, 7);
    let right = column(&rows, 8)[0];
    let left = column(&rows, 9)[0];
    assert_eq!(right, left);
    for (a, b) in [(0, 3), (1, 2)] {
        let avg = 0.5 * (dq[a] + dq[b]);
        assert!((avg - right).abs() <= 1e-3 * right.abs(), "{avg} vs {right}");
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": 6, "task": "sweep", "seed": 5,
        "sweep": {"axis": "seed", "from": 1, "to": 8}}"#;
    let (a, _) = run_with(cfg, &["--reproducible"], &[]);
    let (b, _) = run_with(cfg, &["--reproducible", "--threads", "2"], &[]);
    for name in ["report.json", "sweep.csv"] {
        assert_eq!(std::fs::read(out_file(&a, name)).unwrap(), std::fs::read(out_file(&b, name)).unwrap(), "{name}");
    }
}

#[test]
fn unknown_keys_fail_before_compute() {
    let (dir, out) = run(r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": 6, "task": "eval", "colour": "red"}"#);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_file(&dir, "report.json").exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn bad_inputs_fail_before_compute() {
    for cfg in [
        r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": 6, "task": "eval", "factor": {"kind": "field", "field": "cos(x1)"}}"#,
        r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": "6 + ", "task": "eval"}"#,
        r#"{"backend": {"kind": "synthetic", "dim": 3, "dv": [1, 1], "stiffness": [[0, 1, 1]]}, "curvature": 6, "task": "eval"}"#,
        r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": 6, "task": "derivative", "direction": {"kind": "field", "field": [1, 2]}}"#,
    ] {
        let (dir, out) = run(cfg);
        assert_eq!(out.status.code(), Some(1), "{cfg}");
        assert!(!out_file(&dir, "report.json").exists(), "{cfg}");
    }
}

#[test]
fn overrides_are_recorded() {
    let cfg = r#"{"backend": {"kind": "torus", "grid": [6, 6, 6]}, "curvature": 6, "task": "eval", "factor": {"kind": "sample", "index": 0}}"#;
    let (dir, out) = run_with(cfg, &["--seed", "42"], &[("CONFLAP_SOLVER_TOL", "1e-8")]);
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&dir);
    assert_eq!(rep["config"]["seed"], 42);
    assert_eq!(rep["config"]["tolerances"]["solver"]["solver_tol"], 1e-8);
}

#[test]
fn spectrum_on_sphere() {
    let cfg = r#"{"backend": {"kind": "sphere3", "degree_cutoff": 4}, "curvature": 6, "task": "spectrum", "k_max": 5}"#;
    let (dir, out) = run(cfg);
    assert_eq!(out.status.code(), Some(0));
    let rep = report(&dir);
    let ev: Vec<f64> = rep["result"]["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((ev[0] - 0.75).abs() < 1e-10);
    assert!(ev[1..].iter().all(|v| (v - 3.75).abs() < 1e-9));
    assert_eq!(rep["result"]["clusters"][1]["size"], 4);
}
