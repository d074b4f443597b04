//! Configuration-driven experiment runner for the varflow solver.

pub mod config;
pub mod run;

pub use config::{Command, ExperimentConfig};
pub use run::{config_hash, run_experiment, RunError, RunOptions, RunSummary};
