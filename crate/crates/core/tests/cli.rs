use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_knudsen"))
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn assert_json_close(path: &str, a: &Value, b: &Value) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let kx: Vec<_> = x.keys().collect();
            let ky: Vec<_> = y.keys().collect();
            assert_eq!(kx, ky, "keys at {path}");
            for k in x.keys() {
                assert_json_close(&format!("{path}.{k}"), &x[k], &y[k]);
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "length at {path}");
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                assert_json_close(&format!("{path}[{i}]"), p, q);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            let (p, q) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0), "{path}: {p} vs {q}");
        }
        _ => assert_eq!(a, b, "at {path}"),
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("tiny.json");
    let mut outs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let r = run(&["couple", "--config", cfg.to_str().unwrap(), "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(r.status.success());
        outs.push(out);
    }
    for f in ["survival.csv", "summary.json", "diagnostics.json"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn summary_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("tiny.json");
    let r = run(&["couple", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success());
    let got: Value = serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    let want: Value = serde_json::from_slice(&fs::read(golden("summary_tiny.json")).unwrap()).unwrap();
    assert_json_close("summary", &got, &want);

    let csv = fs::read_to_string(dir.path().join("survival.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,survival,ci_lo,ci_hi"));
    let diag: Value = serde_json::from_slice(&fs::read(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["patches"]["kind"], "whole_boundary");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("tiny.json");
    let out = dir.path().join("s");
    let r = run(&["couple", "--config", cfg.to_str().unwrap(), "--seed", "8", "--pairs", "300", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let s: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["seed"], 8);
    assert_eq!(s["n_pairs"], 300);
}

#[test]
fn validate_passes_on_default_disk() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["validate", "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("validate.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["hitting_density"]["p_value"].as_f64().unwrap() > 1e-3);
}

#[test]
fn patches_on_annulus_have_positive_separation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"domain": {"kind": "annulus", "inner": 1.0, "outer": 2.0}}"#);
    let r = run(&["patches", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success());
    let p: Value = serde_json::from_slice(&fs::read(dir.path().join("patches.json")).unwrap()).unwrap();
    assert_eq!(p["kind"], "caps");
    assert!(p["d0"].as_f64().unwrap() > 0.0);
    assert!(p["f_half_angle"].as_f64().unwrap() > 0.0 && p["r_half_angle"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_from_equilibrium_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["simulate", "--pairs", "20000", "--out", dir.path().to_str().unwrap()]);
    assert!(r.status.success());
    let s: Value = serde_json::from_slice(&fs::read(dir.path().join("simulate.json")).unwrap()).unwrap();
    for c in s["checks"].as_array().unwrap() {
        assert!(c["position_p"].as_f64().unwrap() > 1e-3 && c["speed_p"].as_f64().unwrap() > 1e-3, "{c}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        r#"{"domain": {"kind": "ball", "radius": 1.0}, "alpha0": 0.0}"#,
        r#"{"domain": {"kind": "ball", "radius": 1.0}, "n_pairs": 0}"#,
        r#"{"domain": {"kind": "ball", "radius": 1.0}, "t_max": -1}"#,
        r#"{"domain": {"kind": "ball", "radius": 1.0}, "unknown": 1}"#,
        r#"{"domain": {"kind": "annulus", "inner": 1.0, "outer": 2.0}, "mode": "convex"}"#,
    ] {
        let cfg = write_config(dir.path(), body);
        let r = run(&["couple", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(2), "{body}");
        assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"), "{body}");
    }
}
