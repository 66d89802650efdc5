//! Experiment runner for `smc-ebm`: configuration files and presets, output
//! directories with per-iteration diagnostics, and run comparison.

pub mod compare;
pub mod config;
mod error;
pub mod presets;
pub mod run;

pub use compare::{compare_runs, render_table, ComparisonRow};
pub use config::{ExperimentConfig, ExperimentKind, Overrides};
pub use error::{CliError, Result};
pub use run::{run_experiment, RunReport, RunStatus};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SMC_EBM_THREADS";
