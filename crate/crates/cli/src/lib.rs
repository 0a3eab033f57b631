//! Experiment runner for the `isi-gnn` library: configuration, Monte-Carlo
//! sweeps, training, EXIT analysis and latency tables, all written as CSV.

pub mod config;
pub mod error;
pub mod exit;
pub mod output;
pub mod receiver;
pub mod simulate;
pub mod train;

pub use config::{ExperimentConfig, RawConfig};
pub use error::{CliError, Result};
pub use output::RunContext;
