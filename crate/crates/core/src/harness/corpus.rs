//! Corpus generation and on-disk layout.
//!
//! A corpus directory holds one `entry-NNNN.dump` per entry plus
//! `manifest.jsonl`, one JSON object per line and per entry:
//!
//! ```text
//! {"file":"entry-0000.dump","seed":123,"class":"BAD_SET","site":4,
//!  "path":"B0 -> B1+ -> B3","externals":{"setx":{"0":4976},"entry":{}}}
//! ```
//!
//! `path` is the collapsed block sequence of the faulting run, written as
//! in reports (`+` marks a block repeated one or more times).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gen::gen_program;
use super::inject::{inject_fault, CorpusEntry};
use crate::diagnosis::ErrorClass;
use crate::isa::{parse_dump, DumpError, Externals};
use crate::pathfinder::{Multiplicity, PathBlock};

pub const MANIFEST: &str = "manifest.jsonl";

/// Programs tried per entry before giving up on its class.
const ATTEMPTS: u64 = 64;

/// Seed of entry `index` under `master`, independent of evaluation order.
pub fn entry_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

fn attempt_seed(entry: u64, attempt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(entry);
    rng.set_stream(attempt + 1);
    rng.next_u64()
}

/// One entry for slot `index`. Classes rotate with the index; if no
/// program of `size` takes the preferred class the next one is tried.
pub fn make_entry(master: u64, index: u64, size: usize) -> Option<CorpusEntry> {
    let base = entry_seed(master, index);
    let first = (index % 4) as usize;
    for k in 0..4 {
        let class = ErrorClass::ALL[(first + k) % 4];
        for attempt in 0..ATTEMPTS {
            let seed = attempt_seed(base, attempt);
            if let Ok(e) = inject_fault(&gen_program(seed, size), class, seed) {
                return Some(e);
            }
        }
    }
    None
}

/// `n` entries in index order, built in parallel. Slots for which no
/// class could be injected are skipped.
pub fn build_corpus(master: u64, n: usize, size: usize) -> Vec<CorpusEntry> {
    (0..n as u64).into_par_iter().filter_map(|i| make_entry(master, i, size)).collect()
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Dump { path: PathBuf, source: DumpError },
    #[error("{path} line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    file: String,
    seed: u64,
    class: ErrorClass,
    site: usize,
    path: String,
    externals: Externals,
}

pub fn format_route(blocks: &[PathBlock]) -> String {
    blocks
        .iter()
        .map(|b| format!("B{}{}", b.block, if b.mult == Multiplicity::OneOrMore { "+" } else { "" }))
        .collect::<Vec<_>>()
        .join(" -> ")
}

pub fn parse_route(s: &str) -> Result<Vec<PathBlock>, String> {
    s.split("->")
        .map(|part| {
            let part = part.trim();
            let (body, mult) = match part.strip_suffix('+') {
                Some(b) => (b, Multiplicity::OneOrMore),
                None => (part, Multiplicity::One),
            };
            let id =
                body.strip_prefix('B').and_then(|d| d.parse().ok()).ok_or_else(|| format!("bad block `{part}`"))?;
            Ok(PathBlock { block: id, mult })
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

pub fn write_corpus(dir: &Path, entries: &[CorpusEntry]) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::new();
    for (i, e) in entries.iter().enumerate() {
        let file = format!("entry-{i:04}.dump");
        let path = dir.join(&file);
        fs::write(&path, e.dump.to_string()).map_err(io_err(&path))?;
        let line = ManifestLine {
            file,
            seed: e.seed,
            class: e.injected_class,
            site: e.injected_site,
            path: format_route(&e.true_path_blocks),
            externals: e.externals.clone(),
        };
        manifest.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
        manifest.push('\n');
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(io_err(&path))
}

pub fn read_corpus(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CorpusError::Manifest { path: mpath.clone(), line: k + 1, reason };
        let line: ManifestLine = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let blocks = parse_route(&line.path).map_err(bad)?;
        let dpath = dir.join(&line.file);
        let dtext = fs::read_to_string(&dpath).map_err(io_err(&dpath))?;
        let dump = parse_dump(&dtext).map_err(|source| CorpusError::Dump { path: dpath.clone(), source })?;
        out.push(CorpusEntry {
            seed: line.seed,
            program: dump.program.clone(),
            injected_class: line.class,
            injected_site: line.site,
            externals: line.externals,
            dump,
            true_path_blocks: blocks,
        });
    }
    Ok(out)
}
