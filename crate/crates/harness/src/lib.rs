//! Configuration, runs, audits, sweeps and demos on top of `qkdvss`.

pub mod config;
pub mod demo;
pub mod run;
pub mod sweep;

pub use config::ScenarioConfig;
pub use run::{audit_files, run_config, RunArtifacts, RunMetrics, RunStatus};
