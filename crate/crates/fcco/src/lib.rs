//! Benchmark harness around `fcco-core`: JSON experiment configs, trace
//! CSVs, summaries, parameter sweeps and the verification suites.

pub mod checks;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod output;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
