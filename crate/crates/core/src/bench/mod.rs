//! Experiment configuration, bundled channels and the Monte-Carlo runner.

pub mod channels;
pub mod config;
pub mod runner;

pub use channels::{builtin_channel, BUILTIN_CHANNELS};
pub use config::{Algorithm, ExperimentConfig, Scenario};
pub use runner::{run_experiment, run_single, MetricSeries, Prepared, RunTrace};
