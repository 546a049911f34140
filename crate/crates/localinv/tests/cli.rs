use std::path::Path;
use std::process::{Command, Output};

fn localinv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localinv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn weak_example_exits_zero_with_classification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"task": "certify", "problem": "ha_weakA", "seed": 42}"#,
    );
    let out = localinv(&["run", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 42);
    let checks = report["checks"].as_array().unwrap();
    let names: Vec<&str> = checks.iter().map(|c| c["name"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    let head = checks
        .iter()
        .find(|c| c["name"] == "ha_weakA/certify/certify[0]")
        .unwrap();
    assert!(head["note"].as_str().unwrap().contains("WeakA_NoFixedPoint"));
    assert!(checks
        .iter()
        .all(|c| c["measured"].is_object() && c["oracle"].is_object() && c["oracle_kind"].is_string()));
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"seed": 1, "tolerances": {"oracle_abs": -1e-9}}"#,
        r#"{"seed": 1, "unknown": true}"#,
        r#"{"task": "certify"}"#,
        r#"not json"#,
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(tmp.path(), &format!("bad{i}.json"), text);
        let out = localinv(&["run", "--config", &cfg, "--out", "o"], tmp.path());
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    assert_eq!(
        localinv(&["run", "--config", "missing.json"], tmp.path()).status.code(),
        Some(2)
    );
    let ok = write(tmp.path(), "ok.json", r#"{"seed": 1}"#);
    let out = localinv(
        &["run", "--config", &ok, "--task", "ode", "--problem", "cubic"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(localinv(&["frobnicate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn failed_checks_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    // A tolerance far below round-off cannot be met.
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"seed": 3, "task": "ode", "problem": "g_exp", "tolerances": {"oracle_abs": 1e-300}}"#,
    );
    assert_eq!(
        localinv(&["run", "--config", &cfg, "--out", "o"], tmp.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn flags_override_the_file_and_tables_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"seed": 1, "task": "certify", "output": {"dir": "ignored"}}"#,
    );
    let out = localinv(
        &[
            "run",
            "--config",
            &cfg,
            "--seed",
            "5",
            "--task",
            "ode",
            "--problem",
            "g_exp",
            "--out",
            "o",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(!tmp.path().join("ignored").exists());
    let csv = std::fs::read_to_string(tmp.path().join("o/tables/trajectory_g_exp.csv")).unwrap();
    assert!(csv.starts_with("t,u0,level_residual,defect\n"));
    assert_eq!(csv.lines().count(), 1002);
}

#[test]
fn listing_and_version() {
    let tmp = tempfile::tempdir().unwrap();
    let list = String::from_utf8(localinv(&["list-problems"], tmp.path()).stdout).unwrap();
    for name in ["identity_2d", "cubic", "z2_annulus", "ha_weakA", "atan", "g_exp"] {
        assert!(list.contains(name));
    }
    let v = localinv(&["version"], tmp.path());
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8(v.stdout).unwrap().starts_with("localinv "));
}
