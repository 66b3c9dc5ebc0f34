//! Experiment runner for `csmc-core`: configuration, benchmark suites and
//! report files.

pub mod config;
pub mod error;
pub mod report;
pub mod suite;

pub use crate::config::{Algorithm, ConfigOverrides, ExperimentConfig, Suite};
pub use crate::error::CliError;
pub use crate::report::{emit_plots_data, write_report, Aggregate, ExperimentReport};
pub use crate::suite::{run_and_write, run_suite};
