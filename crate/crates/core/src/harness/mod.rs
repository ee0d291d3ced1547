//! Synthetic workload: random programs, planted faults and a calibration
//! run over the whole pipeline.

mod calibrate;
mod corpus;
mod gen;
mod inject;

pub use calibrate::{
    classes_seen, run_calibration, CalibrationError, CalibrationStats, EntryFailure, ReliabilityBin, RELIABILITY_BINS,
};
pub use corpus::{
    build_corpus, entry_seed, format_route, make_entry, parse_route, read_corpus, write_corpus, CorpusError, MANIFEST,
};
pub use gen::{gen_program, harness_memory, Role, LEGAL_BASE, LEGAL_END, LEGAL_LEN};
pub use inject::{inject_fault, CorpusEntry, ExternalSlots, InjectError};
