use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyloewner")).args(args).current_dir(cwd).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const H4_THEN_IDENTITY: &str =
    r#"[{"until": 1.0, "generator": {"kind": "catalog", "name": "H4"}}, {"generator": {"kind": "identity"}}]"#;

const VIOLATOR: &str = r#"{"dim": 2, "generator": {"kind": "polynomial", "components": [
    [{"alpha": [1, 0], "re": -1.0, "im": 0.0}, {"alpha": [0, 2], "re": 2.0, "im": 0.0}],
    [{"alpha": [0, 1], "re": -1.0, "im": 0.0}]]}}"#;

#[test]
fn verify_catalog_passes_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["verify-catalog", "--angles", "16", "--csv", "table.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["schema"], "polyloewner/1");
    assert_eq!(r["verdict"], "pass");
    assert!(r["timestamp"].is_string());
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.starts_with("map,dim,jet_error"));
}

#[test]
fn limit_of_switched_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("field.json"), H4_THEN_IDENTITY).unwrap();
    let out = bin(&["limit", "--field", "field.json", "--degree", "3", "--out", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let row = r["result"]["degree2"]
        .as_array()
        .unwrap()
        .iter()
        .find(|row| row["alpha"] == serde_json::json!([0, 2]))
        .unwrap()
        .clone();
    // e^T a(T) tends to 1 - e^{-1} once the field switches to -z
    let expected = 1.0 - (-1.0f64).exp();
    assert!((row["re"].as_f64().unwrap() - expected).abs() < 1e-4, "{row}");
}

#[test]
fn violator_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), VIOLATOR).unwrap();
    let out = bin(&["check-generator", "--file", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["verdict"], "fail");
    let w = &r["result"]["membership"]["witness"];
    assert_eq!(w["coordinate"], 1);
    assert!(w["margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["limit"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["limit", "--field", "missing.json"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("junk.json"), "{\"kind\": \"catalog\"}").unwrap();
    assert_eq!(bin(&["evolve", "--field", "junk.json"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["search"], dir.path()).status.code(), Some(2));
    assert_eq!(bin(&["bounds", "--map", "F9"], dir.path()).status.code(), Some(2));
}

#[test]
fn deterministic_reports_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["search", "--alpha", "1,1", "--budget", "30", "--seed", "4", "--deterministic"];
    let (a, b) = (bin(&args, dir.path()), bin(&args, dir.path()));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(report(&a).get("timestamp").is_none());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# caratheodory run\ncommand = caratheodory\nrandom = 5\nseed = 11\ndegree = 6\ndeterministic = true\n",
    )
    .unwrap();
    let out = bin(&["--config", "run.cfg", "--degree", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["config"]["degree"], 3);
    assert_eq!(r["config"]["seed"], 11);
    assert_eq!(r["result"]["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn bounds_for_catalog_map_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["bounds", "--map", "F1", "--points", "10", "--csv", "b.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(csv.starts_with("subject,check,bound,attained,margin,verdict"));
    assert!(csv.lines().any(|l| l.contains("A_(2,0)") && l.ends_with("pass")));
    let out = bin(&["bounds", "--map", "H6"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    std::fs::write(dir.path().join("h2.json"), r#"{"kind": "catalog", "name": "H2"}"#).unwrap();
    let out = bin(&["bounds", "--field", "h2.json", "--points", "5", "--degree", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn evolve_and_catalog_listing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("field.json"), H4_THEN_IDENTITY).unwrap();
    let out = bin(&["evolve", "--field", "field.json", "--t", "2", "--points", "4", "--degree", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert!(r["result"]["evolution"]["local_error"].as_f64().unwrap() < 1e-6);
    let out = bin(&["catalog"], dir.path());
    assert_eq!(report(&out)["result"]["maps"].as_array().unwrap().len(), 14);
}
