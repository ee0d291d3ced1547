use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::inject::CorpusEntry;
use crate::diagnosis::PastheldModel;
use crate::pipeline::{analyze, AnalyzeError, AnalyzeOptions};
use crate::scalar::Probability;

pub const RELIABILITY_BINS: usize = 10;

/// Posteriors closer than this count as tied when ranking the true path.
const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalibrationError {
    #[error("calibration needs at least one corpus entry")]
    Empty,
}

/// An entry the pipeline could not score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub entry: usize,
    pub error: String,
}

/// One bin of the reliability diagram. `mean_predicted` and `frequency`
/// are `None` for an empty bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_predicted: Option<f64>,
    pub frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    /// Entries scored (failures excluded).
    pub n: usize,
    pub top1: f64,
    pub top3: f64,
    pub mrr: f64,
    pub class_top1: f64,
    /// Expected MRR if every entry's paths were ranked uniformly at random.
    pub mrr_uniform: f64,
    /// Standard deviation of the MRR under that uniform ranking.
    pub mrr_uniform_sigma: f64,
    /// Scored entries whose true path was not among the survivors.
    pub missing_true_path: usize,
    pub reliability: Vec<ReliabilityBin>,
    pub failures: Vec<EntryFailure>,
}

struct Scored {
    rank: Option<usize>,
    class_hit: bool,
    n_paths: usize,
    /// (posterior, is the true path)
    posteriors: Vec<(f64, bool)>,
}

fn score_entry<T: Probability>(
    e: &CorpusEntry,
    model: &PastheldModel<T>,
    opts: &AnalyzeOptions,
) -> Result<Scored, AnalyzeError> {
    let a = analyze(&e.dump, model, opts)?;
    let truth = a.paths.paths.iter().position(|p| p.blocks == e.true_path_blocks);
    let post: Vec<f64> = a.diagnosis.paths.iter().map(|p| p.posterior.to_f64().unwrap()).collect();
    // Ties are broken uniformly at random, seeded by the entry, so a model
    // that cannot tell paths apart gets no credit from path order.
    let rank = truth.map(|t| {
        let above = post.iter().filter(|&&p| p > post[t] + TIE).count();
        let tied = post.iter().filter(|&&p| (p - post[t]).abs() <= TIE).count();
        let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
        above + 1 + rng.random_range(0..tied)
    });
    let class_hit = truth.is_some_and(|t| a.diagnosis.paths[t].top_class() == e.injected_class);
    Ok(Scored {
        rank,
        class_hit,
        n_paths: post.len(),
        posteriors: post.iter().enumerate().map(|(i, &p)| (p, Some(i) == truth)).collect(),
    })
}

fn bin_of(p: f64) -> usize {
    ((p * RELIABILITY_BINS as f64) as usize).min(RELIABILITY_BINS - 1)
}

/// Runs the full pipeline on every entry and summarises how well the true
/// path is ranked. Deterministic in its inputs.
pub fn run_calibration<T: Probability>(
    entries: &[CorpusEntry],
    model: &PastheldModel<T>,
    opts: &AnalyzeOptions,
) -> Result<CalibrationStats, CalibrationError> {
    if entries.is_empty() {
        return Err(CalibrationError::Empty);
    }
    let results: Vec<Result<Scored, AnalyzeError>> = entries.par_iter().map(|e| score_entry(e, model, opts)).collect();
    let mut failures = Vec::new();
    let mut scored = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => scored.push(s),
            Err(e) => failures.push(EntryFailure { entry: i, error: e.to_string() }),
        }
    }
    let n = scored.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let top1 = frac(scored.iter().filter(|s| s.rank == Some(1)).count());
    let top3 = frac(scored.iter().filter(|s| s.rank.is_some_and(|r| r <= 3)).count());
    let class_top1 = frac(scored.iter().filter(|s| s.class_hit).count());
    let rr_sum: f64 = scored.iter().map(|s| s.rank.map_or(0.0, |r| 1.0 / r as f64)).sum();
    let mrr = if n == 0 { 0.0 } else { rr_sum / n as f64 };

    let (mut mean_sum, mut var_sum) = (0.0, 0.0);
    for s in &scored {
        let k = s.n_paths as f64;
        let m1: f64 = (1..=s.n_paths).map(|r| 1.0 / r as f64).sum::<f64>() / k;
        let m2: f64 = (1..=s.n_paths).map(|r| 1.0 / (r * r) as f64).sum::<f64>() / k;
        mean_sum += m1;
        var_sum += m2 - m1 * m1;
    }
    let (mrr_uniform, mrr_uniform_sigma) =
        if n == 0 { (0.0, 0.0) } else { (mean_sum / n as f64, var_sum.max(0.0).sqrt() / n as f64) };

    let mut acc = vec![(0usize, 0.0f64, 0usize); RELIABILITY_BINS];
    for (p, hit) in scored.iter().flat_map(|s| s.posteriors.iter().copied()) {
        let b = &mut acc[bin_of(p)];
        b.0 += 1;
        b.1 += p;
        b.2 += hit as usize;
    }
    let reliability = acc
        .into_iter()
        .enumerate()
        .map(|(i, (count, psum, hits))| ReliabilityBin {
            lo: i as f64 / RELIABILITY_BINS as f64,
            hi: (i + 1) as f64 / RELIABILITY_BINS as f64,
            count,
            mean_predicted: (count > 0).then(|| psum / count as f64),
            frequency: (count > 0).then(|| hits as f64 / count as f64),
        })
        .collect();

    Ok(CalibrationStats {
        n,
        top1,
        top3,
        mrr,
        class_top1,
        mrr_uniform,
        mrr_uniform_sigma,
        missing_true_path: scored.iter().filter(|s| s.rank.is_none()).count(),
        reliability,
        failures,
    })
}

impl CalibrationStats {
    pub fn render_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "entries scored: {} ({} failed)", self.n, self.failures.len());
        let _ = writeln!(s, "top1: {:.4}", self.top1);
        let _ = writeln!(s, "top3: {:.4}", self.top3);
        let _ = writeln!(
            s,
            "mrr: {:.4} (uniform ranking: {:.4} +/- {:.4})",
            self.mrr, self.mrr_uniform, self.mrr_uniform_sigma
        );
        let _ = writeln!(s, "class top1: {:.4}", self.class_top1);
        if self.missing_true_path > 0 {
            let _ = writeln!(s, "WARNING: true path missing for {} entries", self.missing_true_path);
        }
        let _ = writeln!(s, "reliability:");
        let _ = writeln!(s, "  bin        count  predicted  observed");
        for b in &self.reliability {
            let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(
                s,
                "  [{:.1},{:.1}) {:>6}  {:>9}  {:>8}",
                b.lo,
                b.hi,
                b.count,
                fmt(b.mean_predicted),
                fmt(b.frequency)
            );
        }
        for f in &self.failures {
            let _ = writeln!(s, "entry {}: {}", f.entry, f.error);
        }
        s
    }
}

/// Entry count per injected class, indexed by [`crate::diagnosis::ErrorClass::index`].
pub fn classes_seen(entries: &[CorpusEntry]) -> [usize; 4] {
    let mut out = [0; 4];
    for e in entries {
        out[e.injected_class.index()] += 1;
    }
    out
}
