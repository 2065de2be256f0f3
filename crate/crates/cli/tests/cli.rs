use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exact-qcqp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

// Unit disk around the origin, objective −x₁² on the slice x₃ = 1.
const DISK: &str = r#"{
  "schema_version": 1,
  "n": 3,
  "Q": ["-1", "0", "0", "0", "0", "0"],
  "H": ["0", "0", "0", "0", "0", "1"],
  "constraints": [{"matrix": ["-1", "0", "0", "-1", "0", "1"]}]
}"#;

#[test]
fn lists_gallery_ids() {
    let o = run(&["gallery", "--list"]);
    assert_eq!(o.status.code(), Some(0));
    let ids = stdout_json(&o)["ids"].as_array().unwrap().clone();
    assert!(ids.iter().any(|v| v == "ex6.1"));
    assert!(ids.iter().any(|v| v == "fig2"));
}

#[test]
fn certify_exit_codes_follow_the_verdict() {
    let o = run(&["certify", "--case", "ex6.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout_json(&o)["report"]["overall"], "not_certified");

    let o = run(&["certify", "--case", "fig2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["report"]["overall"], "certified");
}

#[test]
fn schema_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write(
        dir.path(),
        "bad.json",
        r#"{"schema_version": 1, "n": 2, "Q": ["1","0","1"], "constraints": []}"#,
    );
    let o = run(&["pipeline", "--input", &doc]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["path"], "$.H");
}

#[test]
fn missing_input_is_an_error() {
    let o = run(&["certify", "--input", "/nonexistent/problem.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("cannot read"));
}

#[test]
fn pipeline_solves_a_document() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write(dir.path(), "disk.json", DISK);
    let out = dir.path().join("verdict.json");
    let o = run(&["pipeline", "--input", &doc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["verdict"]["exactness"], "certified_exact");
    let value = v["verdict"]["sdp_value"].as_f64().unwrap();
    assert!((value + 1.0).abs() < 1e-7, "{value}");
    // The --out copy is the same document, and no temp file is left behind.
    assert_eq!(std::fs::read(&out).unwrap(), o.stdout);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "{names:?}");
}

#[test]
fn flag_tolerance_overrides_the_document() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write(
        dir.path(),
        "disk.json",
        &DISK.replace("\"constraints\"", "\"options\": {\"tol\": 1e-6},\n  \"constraints\""),
    );
    let o = run(&["certify", "--input", &doc]);
    assert_eq!(stdout_json(&o)["tol"], 1e-6);
    let o = run(&["certify", "--input", &doc, "--tol", "1e-8"]);
    assert_eq!(stdout_json(&o)["tol"], 1e-8);
}

#[test]
fn plot_writes_raster_and_vector_files() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("fig2");
    let o = run(&[
        "plot",
        "--case",
        "fig2",
        "--resolution",
        "64",
        "--out",
        stem.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ppm = std::fs::read(stem.with_extension("ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n64 64\n255\n"));
    assert_eq!(ppm.len(), b"P6\n64 64\n255\n".len() + 3 * 64 * 64);
    let svg = std::fs::read_to_string(stem.with_extension("svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("data-member=\"0\""));
    let frac = stdout_json(&o)["output"]["gray_fraction"].as_f64().unwrap();
    assert!(frac > 0.0 && frac < 1.0);
}

#[test]
fn plot_needs_an_output_stem() {
    let o = run(&["plot", "--case", "fig2", "--resolution", "8"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gallery_show_round_trips_through_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gallery", "--show", "ex6.1-reduced"]);
    assert_eq!(o.status.code(), Some(0));
    let doc = stdout_json(&o)["problem"].to_string();
    let path = write(dir.path(), "case.json", &doc);
    let o = run(&["pipeline", "--input", &path]);
    let v = stdout_json(&o);
    let value = v["verdict"]["sdp_value"].as_f64().unwrap();
    assert!((value + 3f64.sqrt() / 2.0).abs() < 1e-7, "{value}");
}

#[test]
fn unknown_case_is_an_error() {
    let o = run(&["gallery", "no-such-case"]);
    assert_ne!(o.status.code(), Some(0));
}
