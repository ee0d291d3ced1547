use std::cmp::Ordering;

use thiserror::Error;

use super::model::{ErrorClass, PastheldModel, NO_ERROR};
use crate::evidence::PathFindings;
use crate::scalar::Probability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("no paths to score")]
    NoPaths,
    #[error("every (path, class) hypothesis has zero likelihood")]
    AllPathsExcluded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathDiagnosis<T> {
    pub id: usize,
    /// `p(error on this path | all findings)`.
    pub posterior: T,
    /// Joint `p(error on this path, class | all findings)`, indexed by
    /// [`ErrorClass::index`].
    pub breakdown: [T; 4],
    pub findings: PathFindings,
}

impl<T: Probability> PathDiagnosis<T> {
    pub fn class(&self, c: ErrorClass) -> T {
        self.breakdown[c.index()]
    }

    /// Most probable class on this path (first in class order on ties).
    pub fn top_class(&self) -> ErrorClass {
        let mut best = ErrorClass::BadSet;
        for c in ErrorClass::ALL {
            if self.class(c) > self.class(best) {
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis<T> {
    pub paths: Vec<PathDiagnosis<T>>,
    /// Path ids by descending posterior, ties by ascending id.
    pub ranking: Vec<usize>,
    pub truncated: bool,
}

impl<T: Probability> Diagnosis<T> {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn ranked(&self) -> impl Iterator<Item = &PathDiagnosis<T>> {
        self.ranking.iter().map(|&i| &self.paths[i])
    }

    /// 1-based rank of path `id`.
    pub fn rank_of(&self, id: usize) -> Option<usize> {
        self.ranking.iter().position(|&i| i == id).map(|r| r + 1)
    }
}

/// Single-fault scoring. Hypothesis (i, c) means "path i harbours an error
/// of class c and every other path is clean", with prior `π_c / n`:
///
/// `p(i, c | F) ∝ π_c · p(Fᵢ | c) · Π_{j≠i} p(Fⱼ | NO_ERROR)`
///
/// Dividing through by `Π_j p(Fⱼ | NO_ERROR)` leaves the per-path ratio
/// `π_c · p(Fᵢ | c) / p(Fᵢ | NO_ERROR)`, which avoids underflow on long
/// path lists. A path whose background likelihood is zero is the only one
/// that can be faulty; two such paths exclude every hypothesis.
pub fn score_paths<T: Probability>(
    findings: &[PathFindings],
    model: &PastheldModel<T>,
) -> Result<Diagnosis<T>, ScoreError> {
    if findings.is_empty() {
        return Err(ScoreError::NoPaths);
    }
    let background: Vec<T> = findings.iter().map(|f| model.likelihood(f, NO_ERROR)).collect();
    let zero_bg: Vec<usize> = (0..findings.len()).filter(|&i| background[i] == T::zero()).collect();
    if zero_bg.len() > 1 {
        return Err(ScoreError::AllPathsExcluded);
    }
    let weights: Vec<[T; 4]> = findings
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut w = [T::zero(); 4];
            for c in ErrorClass::ALL {
                let lik = model.likelihood(f, c.index());
                w[c.index()] = match zero_bg.first() {
                    None => model.priors[c.index()] * (lik / background[i]),
                    Some(&k) if k == i => model.priors[c.index()] * lik,
                    Some(_) => T::zero(),
                };
            }
            w
        })
        .collect();
    let total: T = weights.iter().flat_map(|w| w.iter().copied()).sum();
    if total <= T::zero() {
        return Err(ScoreError::AllPathsExcluded);
    }
    let paths: Vec<PathDiagnosis<T>> = weights
        .iter()
        .zip(findings)
        .enumerate()
        .map(|(id, (w, f))| {
            let breakdown = w.map(|x| x / total);
            PathDiagnosis { id, posterior: breakdown.iter().copied().sum(), breakdown, findings: *f }
        })
        .collect();
    let mut ranking: Vec<usize> = (0..paths.len()).collect();
    ranking.sort_by(|&a, &b| {
        paths[b].posterior.partial_cmp(&paths[a].posterior).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    Ok(Diagnosis { paths, ranking, truncated: false })
}
