//! Experiment orchestration: configuration, seed sweeps, verification
//! oracles, metrics aggregation and plot-ready CSV outputs.

pub mod calibrate;
pub mod config;
pub mod metrics;
pub mod runner;
pub mod shapes;
pub mod sweep;
pub mod verify;

pub use config::{ExperimentConfig, InputSpec, Pipeline, TopologySpec};
pub use metrics::RunMetrics;
pub use runner::{run_cell, CellOutput};
pub use sweep::{run_sweep, SweepSummary};
