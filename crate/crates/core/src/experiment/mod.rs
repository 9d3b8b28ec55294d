pub mod config;
pub mod engine;
pub mod scenarios;

pub use config::{ExperimentConfig, Scenario};
pub use engine::{Channel, Peaks, Setup};
pub mod report;

pub use report::{run_scenario, write_outputs, Artifact, OutputFormat, RunReport};
