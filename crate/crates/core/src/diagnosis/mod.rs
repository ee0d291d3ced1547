//! Exact inference over small discrete belief networks, the PASTHELD
//! naive-Bayes model, and the single-fault path scorer.

mod model;
mod network;
mod score;

pub use model::{
    load_model, ErrorClass, EvidenceNode, ModelError, ModelReason, PastheldModel, DEFAULT_MODEL_TEXT, HYPOTHESES,
    NO_ERROR,
};
pub use network::{infer_enumerate, DiscreteNetwork, NetworkError, NetworkNode, Posterior};
pub use score::{score_paths, Diagnosis, PathDiagnosis, ScoreError};
