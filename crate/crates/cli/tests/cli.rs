use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> PathBuf {
    root().join("fixtures").join(name)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(root().join("fixtures/golden").join(name)).unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dumptriage")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ten_path_report_matches_golden() {
    let ten_path = fixture("ten-path.dump");
    let model = fixture("ten-path.model");
    let text = stdout(&["analyze", path_str(&ten_path), "--model", path_str(&model)]);
    assert!(text.contains("p (ERROR ON PATH 6): 0.70"), "{text}");
    assert!(text.contains("BAD SET: 0.42"));
    assert!(text.contains("BAD LOOP: 0.28"));
    assert_eq!(text, golden("ten-path.txt"));
}

#[test]
fn worked_example_lists_two_paths() {
    let text = stdout(&["analyze", path_str(&fixture("two-loop.dump"))]);
    assert_eq!(text, golden("two-loop.txt"));
    let json: serde_json::Value =
        serde_json::from_str(&stdout(&["analyze", path_str(&fixture("two-loop.dump")), "--json"])).unwrap();
    let paths = json["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 2);
    let total: f64 = paths.iter().map(|p| p["posterior"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for p in paths {
        let parts: f64 = p["breakdown"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
        assert!((parts - p["posterior"].as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn missing_dump_is_a_usage_error() {
    let out = run(&["analyze", "/nonexistent/x.dump"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn malformed_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.model");
    std::fs::write(&model, golden("default.model").replace("BAD_SET = 0.25", "BAD_SET = 0.35")).unwrap();
    let out = run(&["analyze", path_str(&fixture("two-loop.dump")), "--model", path_str(&model)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sums to"));
}

#[test]
fn dump_without_any_viable_hypothesis_exits_1() {
    let text = golden("default.model")
        .replace("p(SET_FAIL|BAD_SET) = 0.51", "p(SET_FAIL|BAD_SET) = 0")
        .replace("p(SET_ADJUST_FAIL|BAD_SET) = 0.35", "p(SET_ADJUST_FAIL|BAD_SET) = 0.86")
        .replace("p(SET_FAIL|NO_ERROR) = 0.1", "p(SET_FAIL|NO_ERROR) = 0")
        .replace("p(SET_ADJUST_IN_LOOP_FAIL|NO_ERROR) = 0.4", "p(SET_ADJUST_IN_LOOP_FAIL|NO_ERROR) = 0.5");
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.model");
    std::fs::write(&model, text).unwrap();
    let out = run(&["analyze", path_str(&fixture("two-loop.dump")), "--model", path_str(&model)]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_threshold_is_rejected() {
    let out = run(&["analyze", path_str(&fixture("two-loop.dump")), "--neg-threshold", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dot_output() {
    let two_loop = fixture("two-loop.dump");
    let plain = stdout(&["dot", path_str(&two_loop)]);
    assert_eq!(plain, golden("two-loop.dot"));
    assert_eq!(plain.lines().filter(|l| l.trim_start().starts_with('b') && !l.contains("->")).count(), 3);
    assert_eq!(plain.matches("->").count(), 4);
    assert_eq!(stdout(&["dot", path_str(&two_loop), "--highlight-top", "1"]), golden("two-loop-top1.dot"));
    // more than the number of paths highlights all of them
    let all = stdout(&["dot", path_str(&two_loop), "--highlight-top", "50"]);
    assert_eq!(all, stdout(&["dot", path_str(&two_loop), "--highlight-top", "2"]));
}

#[test]
fn gen_is_reproducible_and_calibrate_reads_it() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        stdout(&["gen", "--seed", "4", "--n", "12", "--size", "16", "--out", path_str(d.path())]);
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 13);
    for n in &names {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap());
    }
    let json: serde_json::Value = serde_json::from_str(&stdout(&["calibrate", path_str(a.path()), "--json"])).unwrap();
    assert_eq!(json["n"], 12);
    let top1 = json["top1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&top1));
    let text = stdout(&["calibrate", path_str(a.path())]);
    assert!(text.starts_with("entries scored: 12 (0 failed)"), "{text}");
}

#[test]
fn generated_dump_analyses() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&["gen", "--seed", "9", "--n", "1", "--out", path_str(dir.path())]);
    let dump = dir.path().join("entry-0000.dump");
    let text = stdout(&["analyze", path_str(&dump), "--expand-all"]);
    assert!(text.contains("p (ERROR ON PATH 1)"), "{text}");
}
