use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duffing-lab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

const ARCTAN_COS: &str = r#"{
    "system": {
        "n": 1,
        "g": {"kind": "arctan", "scale": 1.0},
        "p": {"kind": "trig_poly", "period": 6.283185307179586, "cos": [1.0], "sin": []}
    },
    "numeric": {"tol": 1e-10, "N": 60, "initial": {"I": 100.0, "theta": 0.0, "t": 0.0},
                "grids": {"a": [1e8, 2e8]}},
    "output": {"dir": "res", "formats": ["csv", "json"]}
}"#;

#[test]
fn lists_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["list-scenarios"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    assert!(text.starts_with("ding\t"));
    assert!(text.contains("critical-pair\t"));
}

#[test]
fn conditions_prints_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["conditions", "--scenario", "ding", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["regime"], "StrictlyAbove");
    assert_eq!(json["predicted"], "Unbounded");
    let echo = fs::read_to_string(dir.path().join("o/ding/conditions/config.json")).unwrap();
    assert!(echo.contains("\"experiment\": \"conditions\""));
    let csv = fs::read_to_string(dir.path().join("o/ding/conditions/conditions.csv")).unwrap();
    assert!(csv.starts_with("lhs_A,rhs_B,regime,relative_gap,predicted"));
}

#[test]
fn d_fit_flag_adds_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"system": {"n": 1,
        "g": {"kind": "sum", "terms": [{"kind": "arctan", "scale": 1.0}, {"kind": "algebraic_tail", "c": 20.0, "e": 0.6666666666666666}]},
        "p": {"kind": "trig_poly", "period": 6.283185307179586, "cos": [2.0], "sin": []}}}"#;
    fs::write(dir.path().join("crit.json"), cfg).unwrap();
    let out = lab(&["conditions", "--system", "crit.json", "--d-fit", "--out", "c", "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["regime"], "Critical");
    assert_eq!(json["theorem_prediction"], "Bounded");
    let d = json["d_fit"]["implied_d"].as_f64().unwrap();
    assert!((d - 1.0 / 3.0).abs() < 0.06);
    for key in ["slope", "intercept", "rms_residual"] {
        assert!(json["d_fit"][key].is_number());
    }
    assert!(!dir.path().join("c/conditions.csv").exists());
}

#[test]
fn subcommand_overrides_file_experiment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sys.json"), ARCTAN_COS).unwrap();
    let out = lab(&["poincare", "--system", "sys.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("res/orbit.csv")).unwrap();
    assert!(csv.starts_with("k,t,x,y,I,theta_lift\r\n"));
    assert_eq!(csv.lines().count(), 62);
    let p: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("res/poincare.json")).unwrap()).unwrap();
    assert!(p["rotation_number"].as_f64().unwrap() > 1.0);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"system": {"n": 1}}"#).unwrap();
    assert_eq!(lab(&["conditions", "--system", "bad.json"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("sys.json"), ARCTAN_COS).unwrap();
    // run needs the experiment inside the file
    assert_eq!(lab(&["run", "--system", "sys.json"], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["classify", "--system", "sys.json", "--tol", "1e-3"], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["sweep", "--scenario", "nope"], dir.path()).status.code(), Some(2));
    assert_eq!(lab(&["sweep"], dir.path()).status.code(), Some(2));
}

#[test]
fn numeric_failures_exit_3_with_errors_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sys.json"), ARCTAN_COS).unwrap();
    let out = lab(&["oscillatory", "--system", "sys.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let errs: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("res/errors.json")).unwrap()).unwrap();
    assert_eq!(errs[0]["kind"], "amplitude-too-large");
    assert_eq!(errs[0]["experiment"], "oscillatory");
    assert!(dir.path().join("res/config.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sys.json"), ARCTAN_COS).unwrap();
    let files = ["res/orbit.csv", "res/verdict.json", "res/config.json"];
    assert!(lab(&["classify", "--system", "sys.json"], dir.path()).status.success());
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
    assert!(lab(&["classify", "--system", "sys.json"], dir.path()).status.success());
    let second: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
    assert_eq!(first, second);
}
