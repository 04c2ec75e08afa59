//! Experiment runner for `collapse-core`.
//!
//! [`run`] takes a subcommand name and an [`ExperimentConfig`], computes the rows,
//! fits and verdicts, and returns a [`Report`]; [`emit`] writes it as CSV tables and a
//! versioned `report.json`. The `collapse-lab` binary wraps both.

pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod report;

pub use config::{ExperimentConfig, ModelKind, ModelSpec, EXPERIMENTS};
pub use error::LabError;
pub use exec::RayonExecutor;
pub use experiments::run;
pub use report::{emit, Format, Report, Table, Verdict};
