use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tvcontrol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvcontrol")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_example1_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = tvcontrol(&["solve", "--example", "1", "--n", "1023", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["control.json", "state.csv", "adjoint.csv", "phi.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["jumps"], 3);
    assert_eq!(summary["n"], 1023);
    assert!(summary["optimality"]["phi_at_one"].as_f64().unwrap() <= 1e-13);
    let state = fs::read_to_string(dir.path().join("state.csv")).unwrap();
    assert_eq!(state.lines().next(), Some("node,value"));
    assert_eq!(state.lines().count(), 1 + 1024);
}

#[test]
fn study_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = tvcontrol(&["study", "--example", "1", "--levels", "4..9", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("ex1_variational_study.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("h,n,e_q_L1"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ex1_variational_study.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn study_output_is_independent_of_jobs() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, jobs) in dirs.iter().zip(["1", "1", "3"]) {
        let out = tvcontrol(&[
            "study", "--example", "2", "--scheme", "full", "--levels", "4..8", "--reference-level", "12", "--jobs", jobs,
            "--out", path(d.path()),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["ex2_full_study.csv", "ex2_full_study.json"] {
        let first = fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(fs::read(d.path().join(name)).unwrap(), first, "{name}");
        }
    }
}

#[test]
fn invalid_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    // rejected by the argument parser
    assert_eq!(tvcontrol(&["solve", "--example", "3", "--n", "15"]).status.code(), Some(2));
    assert_eq!(tvcontrol(&["study", "--example", "1", "--levels", "9..4"]).status.code(), Some(2));
    // rejected by validation
    let out = tvcontrol(&["solve", "--example", "1", "--n", "0", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error [mesh]"));
    let out = tvcontrol(&["study", "--example", "2", "--levels", "4..9", "--reference-level", "10", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    let out = tvcontrol(&["study", "--example", "1", "--levels", "4..6", "--alpha", "1e-3", "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    let out = tvcontrol(&["verify", "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let out = tvcontrol(&["verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().count() >= 7);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}
