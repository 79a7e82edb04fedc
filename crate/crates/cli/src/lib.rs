//! Config-driven experiment runner: TOML configs in, CSV tables and a JSON
//! manifest out.

pub mod app;
pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod output;
pub mod plan;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use experiments::{ChaosPoint, Outcome, SummaryRow};
pub use plan::{Job, Plan};
pub use runner::{run_config, run_plan, sweep, RunReport, SweepAxis};
