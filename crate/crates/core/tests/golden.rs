//! Byte-for-byte comparison against `fixtures/golden/`. Run with
//! `UPDATE_GOLDEN=1` to rewrite the files after an intended change.

mod support;

use support::{golden_outputs, golden_path};

#[test]
fn outputs_match_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut stale = Vec::new();
    for (name, actual) in golden_outputs() {
        let path = golden_path(name);
        if update {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &actual).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if expected != actual {
            stale.push(name);
        }
    }
    assert!(stale.is_empty(), "golden mismatch: {stale:?}");
}

#[test]
fn outputs_are_stable_across_runs() {
    assert_eq!(golden_outputs(), golden_outputs());
}
