//! Experiment orchestration: configs, run directories, CSV schemas, and
//! the five CLI commands.

pub mod config;
pub mod csvfmt;
pub mod runner;

pub use config::{DatasetSpec, ExperimentConfig, StyleStrength};
pub use runner::{
    cmd_ablate, cmd_adapt, cmd_analyze, cmd_evaluate, cmd_generalize, RunContext,
};
