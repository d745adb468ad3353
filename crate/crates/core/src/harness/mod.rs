//! Statistics, experiment configuration, orchestration and report
//! persistence.

pub mod acceptance;
pub mod config;
pub mod lab;
pub mod report;
pub mod run;
pub mod stats;

pub use config::{Experiment, ExperimentConfig};
pub use report::{replay_verdicts, verify_manifest, write_report, ExperimentReport};
pub use run::{run_and_write, run_experiment};
