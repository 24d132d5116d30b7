use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(dir: &Path, config: &str, extra: &[&str]) -> (i32, String) {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_layerpot"))
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

const SOLID: &str = r#"{"command": "solid-angle", "parameters": {"level": 3}, "seed": 5}"#;

#[test]
fn solid_angle_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run(tmp.path(), SOLID, &[]);
    assert_eq!(code, 0, "{err}");
    let r = report(tmp.path());
    assert_eq!(r["pass"], true);
    assert_eq!(r["seed"], 5);
    assert_eq!(r["config"]["parameters"]["interior"], 10);
    assert_eq!(r["results"]["interior"].as_array().unwrap().len(), 10);
    assert!(tmp.path().join("out/solid_angle.csv").exists());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _) = run(tmp.path(), SOLID, &["--seed", "9"]);
    assert_eq!(code, 0);
    assert_eq!(report(tmp.path())["config"]["seed"], 9);
}

#[test]
fn malformed_configs_exit_2_without_output() {
    for bad in [
        "{not json",
        r#"{"command": "solid-angle", "bogus": 1}"#,
        r#"{"command": "solid-angle", "parameters": {"level": 3, "extra": true}}"#,
        r#"{"command": "warp-drive"}"#,
        r#"{"command": "solid-angle", "parameters": {"level": 40}}"#,
        r#"{"command": "symbols", "parameters": {"spec": "nope"}}"#,
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let (code, _) = run(tmp.path(), bad, &[]);
        assert_eq!(code, 2, "{bad}");
        assert!(!tmp.path().join("out").exists(), "{bad}");
    }
}

#[test]
fn reports_are_not_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), SOLID, &[]).0, 0);
    assert_eq!(run(tmp.path(), SOLID, &[]).0, 2);
    assert_eq!(run(tmp.path(), SOLID, &["--force-overwrite"]).0, 0);
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("generated_unix");
    v
}

#[test]
fn replays_are_identical() {
    let degree = r#"{"command": "hammerstein-degree", "seed": 3, "parameters": {"N": 1, "samples": 16,
        "problem": {"domain": {"shape": "interval", "a": 0, "b": 1, "n": 17},
                    "kernel": {"family": "gaussian", "amplitude": 0.5, "length": 1.0},
                    "psi": {"family": "sine", "amplitude": 0.5},
                    "offset": {"family": "cosine", "amplitude": 0.2, "frequency": [2, 0, 0]},
                    "radius": 1}}}"#;
    for cfg in [SOLID, degree] {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(run(tmp.path(), cfg, &[]).0, 0);
        let first = std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap();
        assert_eq!(run(tmp.path(), cfg, &["--force-overwrite"]).0, 0);
        let second = std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap();
        let strip = |s: &str| s.lines().filter(|l| !l.contains("\"generated_unix\"")).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&first), strip(&second));
        let a: Value = serde_json::from_str(&first).unwrap();
        let b: Value = serde_json::from_str(&second).unwrap();
        assert_eq!(without_timestamp(a), without_timestamp(b));
    }
}

#[test]
fn laplacian_symbols() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = run(tmp.path(), r#"{"command": "symbols", "parameters": {"spec": "laplacian", "expected_det_degree": 2}}"#, &[]);
    assert_eq!(code, 0, "{err}");
    let r = report(tmp.path());
    assert_eq!(r["results"]["det_degree"], 2);
    assert_eq!(r["results"]["conditions"]["conditions"]["c316"], true);
}

#[test]
fn failing_suite_exits_1_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "hammerstein-solve", "parameters": {
        "problem": {"domain": {"shape": "interval", "a": 0, "b": 1, "n": 9},
                    "kernel": {"family": "constant", "lambda": 2.0},
                    "psi": {"family": "linear", "slope": 1},
                    "offset": {"family": "constant", "value": 0.1},
                    "radius": 1}}}"#;
    let (code, _) = run(tmp.path(), cfg, &[]);
    assert_eq!(code, 1);
    let r = report(tmp.path());
    assert_eq!(r["pass"], false);
    assert!(r["results"]["error"].as_str().unwrap().contains("contraction"));
}

#[test]
fn hammerstein_solve_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "hammerstein-solve", "parameters": {"tol": 1e-12,
        "problem": {"domain": {"shape": "interval", "a": 0, "b": 1, "n": 9},
                    "kernel": {"family": "constant", "lambda": 0.5},
                    "psi": {"family": "linear", "slope": 1},
                    "offset": {"family": "constant", "value": 1},
                    "radius": 3}}}"#;
    assert_eq!(run(tmp.path(), cfg, &[]).0, 0);
    let values = report(tmp.path())["results"]["solution"]["values"].clone();
    for v in values.as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 2.0).abs() < 1e-11);
    }
}
