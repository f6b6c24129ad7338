//! Problem files, CSV traces, the scalar reference example and the property
//! battery behind the `scnp` binary.

use std::path::PathBuf;

mod problem_file;
mod properties;
mod reference;
mod trace;

pub use problem_file::{
    ErrorFile, FamilyFile, HalfspaceFile, MapFile, OperatorFile, ProblemFile, RuleFile, SchedulesFile, SetFile,
    SpaceFile, StopFile,
};
pub use properties::{exact_duality_map, skewed_duality_map, Battery, BatteryReport, DualityFn, PropertyRow};
pub use reference::{
    compare_with_reference, first_index_below, reference_instance, reference_step, reference_trajectory, Comparison,
    ReferenceStep, COMPONENTS,
};
pub use trace::{parse_cell, trace_row, write_trace, TRACE_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot read problem file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("invalid problem {path}: {source}")]
    Invalid { path: PathBuf, source: crate::Error },

    #[error("solver failed on {path}: {source}")]
    Solver { path: PathBuf, source: crate::Error },

    #[error("cannot write trace {path}: {message}")]
    Trace { path: PathBuf, message: String },
}
