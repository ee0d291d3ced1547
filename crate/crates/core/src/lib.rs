//! Crash-dump triage for TinyASM programs.
//!
//! Given a dump taken at an illegal memory reference, the pipeline
//! enumerates the execution paths that could have led to the fault,
//! discards the ones constant propagation can refute, extracts evidence
//! from each survivor and ranks them with a small Bayesian model.
//!
//! ```
//! use dumptriage::{analyze, parse_dump, AnalyzeOptions, PastheldModelF64};
//!
//! let dump = parse_dump(include_str!("../../../fixtures/two-loop.dump")).unwrap();
//! let model = PastheldModelF64::default();
//! let result = analyze(&dump, &model, &AnalyzeOptions::default()).unwrap();
//! assert_eq!(result.diagnosis.n_paths(), 2);
//! ```

pub mod cfg;
pub mod diagnosis;
pub mod evidence;
pub mod harness;
pub mod isa;
pub mod pathfinder;
mod scalar;

pub use scalar::Probability;
mod pipeline;
pub mod report;

pub use diagnosis::{
    infer_enumerate, load_model, score_paths, Diagnosis, DiscreteNetwork, ErrorClass, PastheldModel, PathDiagnosis,
};
pub use evidence::{EvidenceConfig, PathFindings};
pub use isa::{parse_dump, parse_program, DumpSnapshot, Program};
pub use pathfinder::{ExecutionPath, PathSet, RootVariable};
pub use pipeline::{analyze, Analysis, AnalyzeError, AnalyzeOptions};

pub type DiagnosisF64 = Diagnosis<f64>;
pub type DiagnosisF32 = Diagnosis<f32>;
pub type PastheldModelF64 = PastheldModel<f64>;
pub type PastheldModelF32 = PastheldModel<f32>;
pub type DiscreteNetworkF64 = DiscreteNetwork<f64>;
pub type DiscreteNetworkF32 = DiscreteNetwork<f32>;
pub type AnalysisF64 = Analysis<f64>;
