pub mod config;
pub mod datasets;
pub mod plot;
pub mod runner;

pub use config::{ExperimentConfig, EXPERIMENTS};
pub use runner::{run_experiment, RunOutput};
