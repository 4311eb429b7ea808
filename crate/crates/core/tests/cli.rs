use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pwhac::cli::RunFile;
use pwhac::diagnostics::{diagnose, DiagnosticsReport, Verdict};
use pwhac::model::RegressionProblem;
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn pwhac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwhac")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn config(name: &str) -> String {
    fixture(name).join("run.toml").display().to_string()
}

#[test]
fn diagnose_location_fixture() {
    let out = pwhac(&["diagnose", "--config", &config("location"), "--json"]);
    let v = json(&out);
    assert_eq!(v["verdict"], "SizeOneSpanCase");

    // Round trip: the JSON re-read by the library equals the library's report.
    let report: DiagnosticsReport = serde_json::from_value(v).unwrap();
    let file = RunFile::load(&fixture("location").join("run.toml")).unwrap();
    let x = pwhac::io::read_matrix(file.x.as_ref().unwrap(), false).unwrap();
    let prob = RegressionProblem::new(
        x,
        nalgebra::DMatrix::from_element(1, 1, 1.0),
        nalgebra::DVector::zeros(1),
    )
    .unwrap();
    let cfg = pwhac::EstimatorConfig::new(file.kernel.unwrap(), file.rule.unwrap(), file.p.unwrap());
    let lib = diagnose(&prob, &cfg, file.critical_value.unwrap()).unwrap();
    assert_eq!(report, lib);
    assert_eq!(report.verdict, Verdict::SizeOneSpanCase);
}

#[test]
fn estimate_rejects_large_p() {
    let out = pwhac(&["estimate", "--config", &config("location"), "--p", "11"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("p ≤ n/(k+1)"), "{err}");
}

#[test]
fn estimate_reports_omega() {
    let v = json(&pwhac(&["estimate", "--config", &config("scenario3"), "--json"]));
    assert_eq!(v["status"], "defined");
    assert!(v["omega"][0][0].as_f64().unwrap() > 0.0);
    assert!(v["bandwidth"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["psi"].as_array().unwrap().len(), 2);
}

#[test]
fn test_and_adjust() {
    let t = json(&pwhac(&["test", "--config", &config("scenario3"), "--C", "0", "--json"]));
    assert_eq!(t["reject"], true);
    assert_eq!(t["C"], 0.0);
    let a = json(&pwhac(&["adjust", "--config", &config("scenario3"), "--C", "1e12", "--json"]));
    assert_eq!(a["scenario"], 3);
    assert_eq!(a["reject"], false);
    assert_eq!(a["defined"], true);
}

#[test]
fn flags_without_config() {
    let dir = fixture("scenario3");
    let x = dir.join("X.csv").display().to_string();
    let y = dir.join("y.csv").display().to_string();
    let a = json(&pwhac(&["test", "--x", &x, "--y", &y, "--R", "0,1", "--r", "0", "--C", "3.84", "--json"]));
    let b = json(&pwhac(&["test", "--config", &config("scenario3"), "--C", "3.84", "--json"]));
    assert_eq!(a, b);
    let kv = json(&pwhac(&[
        "test", "--x", &x, "--y", &y, "--R", "0,1", "--rule", "kv", "--b", "0.5", "--kernel", "qs", "--C", "1", "--json",
    ]));
    assert!(kv["t"].as_f64().unwrap() > 0.0);
}

#[test]
fn header_flag_skips_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(fixture("scenario3").join("X.csv")).unwrap();
    let x = tmp.path().join("X.csv");
    std::fs::write(&x, format!("x1,x2\n{src}")).unwrap();
    let y_src = std::fs::read_to_string(fixture("scenario3").join("y.csv")).unwrap();
    let y = tmp.path().join("y.csv");
    std::fs::write(&y, format!("y\n{y_src}")).unwrap();
    let (x, y) = (x.display().to_string(), y.display().to_string());
    let with = json(&pwhac(&["test", "--x", &x, "--y", &y, "--R", "0,1", "--C", "1", "--header", "--json"]));
    let plain = json(&pwhac(&["test", "--config", &config("scenario3"), "--C", "1", "--json"]));
    assert_eq!(with, plain);
    let without = pwhac(&["test", "--x", &x, "--y", &y, "--R", "0,1", "--C", "1"]);
    assert_eq!(without.status.code(), Some(2));
}

#[test]
fn input_errors_exit_2() {
    let missing = pwhac(&["test", "--x", "/nonexistent/X.csv", "--R", "1", "--C", "1"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read"));
    let dims = pwhac(&["test", "--config", &config("scenario3"), "--R", "0,1,0", "--C", "1"]);
    assert_eq!(dims.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&dims.stderr).contains("R has 3 columns"));
}

#[test]
fn calibrate_scenario3_fixture() {
    let args = ["calibrate", "--config", &config("scenario3"), "--delta", "0.05", "--reps", "400", "--rho-grid", "0,0.9,-0.9", "--json"];
    let v = json(&pwhac(&args));
    let c = v["C"].as_f64().unwrap();
    assert!(c > 0.0);
    assert_eq!(v["procedure"]["scenario"], 3);
    assert!(v["calibration"]["max_rate"].as_f64().unwrap() <= 0.05);
    assert_eq!(v["validation"]["size"]["curve"]["points"].as_array().unwrap().len(), 3);
    // Same seed, same bytes.
    assert_eq!(pwhac(&args).stdout, pwhac(&args).stdout);
}

#[test]
fn calibrate_refuses_unadjusted_breakdown() {
    let out = pwhac(&["calibrate", "--config", &config("scenario3"), "--unadjusted", "--reps", "100", "--rho-grid", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not applicable"));
}

#[test]
fn study_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("curve.csv");
    let o = out.display().to_string();
    let v = json(&pwhac(&[
        "study", "--config", &config("scenario3"), "--C", "5", "--reps", "200", "--rho-grid", "0,0.5",
        "--distances", "0,4", "--out", &o, "--json",
    ]));
    assert_eq!(v["curve"]["points"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rho,distance,rate,ci"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn usage_errors() {
    assert_eq!(pwhac(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pwhac(&["test", "--config", &config("scenario3")]).status.code(), Some(2));
}
