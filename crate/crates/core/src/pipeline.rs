use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::Cfg;
use crate::diagnosis::{score_paths, Diagnosis, PastheldModel, ScoreError};
use crate::evidence::{extract_findings, EvidenceConfig, PathFindings};
use crate::isa::DumpSnapshot;
use crate::pathfinder::{
    enumerate_paths, find_root_variable, prune_infeasible, PathError, PathSet, RootVariable, DEFAULT_PATH_CAP,
};
use crate::scalar::Probability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub evidence: EvidenceConfig,
    pub path_cap: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { evidence: EvidenceConfig::default(), path_cap: DEFAULT_PATH_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Everything the pipeline produced for one dump.
#[derive(Debug, Clone)]
pub struct Analysis<T> {
    pub root: RootVariable,
    pub cfg: Cfg,
    /// Paths before pruning.
    pub enumerated: usize,
    /// Surviving paths; `paths.paths[i]` is scored as `diagnosis.paths[i]`.
    pub paths: PathSet,
    pub findings: Vec<PathFindings>,
    pub diagnosis: Diagnosis<T>,
}

/// cfg → root variable → path enumeration → pruning → evidence → scoring.
pub fn analyze<T: Probability>(
    dump: &DumpSnapshot,
    model: &PastheldModel<T>,
    opts: &AnalyzeOptions,
) -> Result<Analysis<T>, AnalyzeError> {
    let cfg = Cfg::from_program(&dump.program);
    let root = find_root_variable(dump)?;
    let all = enumerate_paths(&cfg, dump, &root, opts.path_cap);
    let enumerated = all.len();
    let paths = prune_infeasible(all, dump, &cfg, &root);
    let findings: Vec<PathFindings> =
        paths.paths.iter().map(|p| extract_findings(dump, p, &root, &cfg, &opts.evidence)).collect();
    let mut diagnosis = score_paths(&findings, model)?;
    diagnosis.truncated = paths.truncated;
    Ok(Analysis { root, cfg, enumerated, paths, findings, diagnosis })
}
