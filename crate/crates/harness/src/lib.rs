//! Experiment runner, dataset files, theoretical bounds and metrics for
//! [`crowdbp`]. The `crowdbp` binary wraps these as subcommands.

pub mod bounds;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;

pub use bounds::{theoretical_bounds, tree_probability_bound, TheoreticalBounds};
pub use config::{ExperimentConfig, SweepVariable};
pub use dataset::{load_dataset, subsample_assignments, Alphabet, Dataset};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, write_metrics};
pub use metrics::{error_rate, MetricsRow};
