//! Experiment runner for `nss-core`: configuration files, parallel
//! ensembles, the verification pipeline and its CSV/summary outputs.

pub mod config;
pub mod ensemble;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{LabError, LabResult};
pub use pipeline::{run_config, run_custom, run_example, ExperimentReport, RunVerdict};
