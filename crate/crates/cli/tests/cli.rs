use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn qrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrisk"))
        .args(args)
        .output()
        .expect("qrisk runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn sample_csv(dir: &tempfile::TempDir) -> String {
    let path = dir.path().join("samples.csv");
    fs::write(&path, "1\n2\n3\n4\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn eval_prints_expected_shortfall() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(&dir);
    let o = qrisk(&["eval", "--dist", &csv, "--distortion", r#"{"kind":"es","alpha":0.5}"#]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("3.5"));
}

#[test]
fn eval_json_has_schema_and_all_methods() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(&dir);
    let o = qrisk(&[
        "eval", "--dist", &csv, "--distortion", r#"{"kind":"es","alpha":0.5}"#, "--method", "all", "--format", "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "qrisk/1");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r["value"].as_f64(), Some(3.5));
    }
}

#[test]
fn spectrum_of_var_is_a_domain_error() {
    let o = qrisk(&["spectrum", "--distortion", r#"{"kind":"var","alpha":0.5}"#]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("not convex"), "{err}");
    assert!(err.contains("eps = 0.25"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn counterexample_for_var_has_known_gap() {
    let o = qrisk(&["counterexample", "--distortion", r#"{"kind":"var","alpha":0.5}"#, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["gap"].as_f64().unwrap() - 1.125).abs() < 1e-12);
    assert!((v["rho_sum"].as_f64().unwrap() + 1.25).abs() < 1e-12);
    assert_eq!(v["a"].as_f64(), Some(1.0));
}

#[test]
fn counterexample_for_convex_distortion_is_a_domain_error() {
    let o = qrisk(&["counterexample", "--distortion", r#"{"kind":"es","alpha":0.5}"#]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_of_range_level_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(&dir);
    let o = qrisk(&["var", "--dist", &csv, "--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_and_bad_json_exit_one() {
    let o = qrisk(&["eval", "--dist", "/nonexistent/x.csv", "--distortion", r#"{"kind":"expectation"}"#]);
    assert_eq!(o.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(&dir);
    let o = qrisk(&["eval", "--dist", &csv, "--distortion", r#"{"kind":"nope"}"#]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn nan_rows_are_rejected_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "1\n2\nNaN\n").unwrap();
    let o = qrisk(&["var", "--dist", path.to_str().unwrap(), "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unknown_flags_and_bad_tolerances_are_rejected() {
    assert_eq!(qrisk(&["eval", "--bogus"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(&dir);
    for bad in ["-1", "0", "nan"] {
        let o = qrisk(&["--quadrature-tol", bad, "var", "--dist", &csv, "--alpha", "0.5"]);
        assert_eq!(o.status.code(), Some(1), "{bad}");
    }
    let o = qrisk(&["--mixture-tol", "1e-7", "var", "--dist", &csv, "--alpha", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn es_forms_agree_in_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(&dir);
    let o = qrisk(&["es", "--dist", &csv, "--alpha", "0.5", "--form", "all", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("form,value,minimizer"));
    for line in lines {
        assert_eq!(line.split(',').nth(1), Some("3.5"), "{line}");
    }
}

#[test]
fn classify_separates_domains() {
    let o = qrisk(&[
        "classify",
        "--dist",
        r#"{"kind":"pareto_negative","scale":1}"#,
        "--distortion",
        r#"{"kind":"sqrt_example"}"#,
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let verdicts: Vec<(&str, &str)> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["class"].as_str().unwrap(), r["verdict"].as_str().unwrap()))
        .collect();
    assert_eq!(verdicts, vec![("LQ", "Member"), ("Acerbi", "NonMember"), ("Pichler", "Member")]);
}

#[test]
fn compare_reports_inclusion() {
    let o = qrisk(&[
        "compare",
        "--distortion",
        r#"{"kind":"es","alpha":0.5}"#,
        "--against",
        r#"{"kind":"expectation"}"#,
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["first_in_second"], true);
}

#[test]
fn check_convexity_reports_witness() {
    let o = qrisk(&["check-convexity", "--distortion", r#"{"kind":"threshold","delta":0.5}"#, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["convex"], false);
    assert!(v["excess"].as_f64().unwrap() > 0.0);
}

#[test]
fn empty_suite_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    fs::write(&path, r#"{"distributions":[],"distortions":[]}"#).unwrap();
    let o = qrisk(&["suite", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no cases"));
}

#[test]
fn suite_reports_expected_failure_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("matrix.json");
    fs::write(
        &path,
        r#"{"distributions":[{"kind":"empirical","values":[1,2,3,4]},{"kind":"atoms","atoms":[[-1,0.5],[2,0.5]]}],
            "distortions":[{"kind":"var","alpha":0.5},{"kind":"es","alpha":0.25}],"trials":300}"#,
    )
    .unwrap();
    let args = ["suite", "--config", path.to_str().unwrap(), "--seed", "7", "--format", "json"];
    let first = qrisk(&args);
    let second = qrisk(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(first.stdout, second.stdout);
    let v: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(v["failed"], 0);
    assert_eq!(v["seed"], 7);
    let expected: Vec<&Value> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["status"] == "expected-failure")
        .collect();
    assert_eq!(expected.len(), 1);
    assert_eq!(expected[0]["distortion"], "var(0.5)");
}

#[test]
fn spectrum_emits_plot_ready_csv() {
    let o = qrisk(&["spectrum", "--distortion", r#"{"kind":"es","alpha":0.5}"#, "--points", "5", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("u,density,distortion\n"));
    assert_eq!(out.lines().count(), 6);
}
