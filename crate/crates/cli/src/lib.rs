//! Experiment runner behind the `consensus-lab` binary.
//!
//! A run is one TOML config plus a mode; it writes `summary.json` and, depending
//! on the mode, `trajectory.csv`, `intervals.csv` and `graph.edges`.

pub mod config;
pub mod error;
pub mod examples;
pub mod run;

pub use config::{ExperimentConfig, Mode};
pub use error::CliError;
pub use examples::{bundled_examples, find_example, BundledExample};
pub use run::{run, ConfigSource, Overrides, Report};
