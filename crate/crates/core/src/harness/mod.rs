//! Configuration, tensor cache, experiments and report files.

pub mod cache;
pub mod config;
mod error;
mod experiments;
pub mod report;

pub use cache::{Lookup, TensorCache, CACHE_ENV};
pub use config::{load_config, ConfigErrors, SimConfig};
pub use error::HarnessError;
pub use experiments::{
    build_macro, build_micro, cache_key, cmd_converge, cmd_kernel, cmd_run, cmd_tensors, compute_tensors,
    macro_variant, tensors_for, Context, ConvergenceRow, ConvergenceTable, RunReport, SolverKind, TensorsOutcome,
};
