use std::process::{Command, Output};

use normform_cli::Report;

fn normform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_normform"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Report {
    serde_json::from_slice(&out.stdout).expect("stdout is a report")
}

fn write_problem(dir: &tempfile::TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn seeded_runs_are_byte_identical() {
    for cmd in ["classify", "reduce", "stratify"] {
        let a = normform(&[cmd, "--problem", "pitchfork_z2", "--seed", "7"]);
        let b = normform(&[cmd, "--problem", "pitchfork_z2", "--seed", "7"]);
        assert_eq!(a.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{cmd}");
        assert_eq!(report(&a).timestamp, "1970-01-01T00:00:00Z");
    }
}

#[test]
fn source_date_epoch_sets_timestamp() {
    let out = Command::new(env!("CARGO_BIN_EXE_normform"))
        .args(["index", "--problem", "cusp"])
        .env("SOURCE_DATE_EPOCH", "86400")
        .output()
        .unwrap();
    assert_eq!(report(&out).timestamp, "1970-01-02T00:00:00Z");
}

#[test]
fn kuranishi_report_fields() {
    let out = normform(&["kuranishi", "--problem", "flat_u1_torus", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r.command, "kuranishi");
    assert_eq!(r.status, "ok");
    assert_eq!(r.payload["virtual_dimension"], 0);
    assert_eq!(r.payload["homology"], serde_json::json!([1, 2, 1]));
}

#[test]
fn point_override() {
    let out = normform(&["equivariant", "--problem", "circle_cubic", "--point", "1,0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out).payload["classification"], "submersion");

    let neg = normform(&["index", "--problem", "cusp", "--point", "-0.5,0.25"]);
    assert_eq!(neg.status.code(), Some(0));
    assert_eq!(report(&neg).payload["point"], serde_json::json!([-0.5, 0.25]));
}

#[test]
fn csv_output_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strata.csv");
    let out = normform(&[
        "stratify",
        "--problem",
        "pitchfork",
        "--format",
        "csv",
        "--grid",
        "51",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,stratum"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.split(',').count() == 3));
}

#[test]
fn csv_is_rejected_for_other_commands() {
    let out = normform(&["index", "--problem", "cusp", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn problem_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_problem(
        &dir,
        "graph.json",
        r#"{"name":"graph","map":{"kind":"expr","outputs":["y - x^2","y"],"vars":["x","y"]}}"#,
    );
    let out = normform(&["reduce", "--problem", &path, "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r.problem, "graph");
    assert_eq!(r.payload["kernel_dim"], 1);
    let again: Report = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(again, r);
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_problem(&dir, "bad.json", r#"{"map":{"kind":"expr","outputs":["x +"],"vars":["x"]}}"#);
    let out = normform(&["index", "--problem", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/map/outputs/0"));

    let unknown = normform(&["index", "--problem", "pitchfrok"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("pitchfork_z2"));

    assert_eq!(normform(&["index", "--problem", "cusp", "--point", "1"]).status.code(), Some(2));
    assert_eq!(normform(&["transmogrify", "--problem", "cusp"]).status.code(), Some(2));
    assert_eq!(normform(&["index"]).status.code(), Some(2));
}

#[test]
fn verification_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_problem(
        &dir,
        "broken.json",
        r#"{"map":{"kind":"expr","outputs":["x + x^2"],"vars":["x"]},
            "group":{"kind":"finite","generators":[{"domain":[[-1]],"target":[[-1]]}]}}"#,
    );
    let out = normform(&["equivariant", "--problem", &path]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
