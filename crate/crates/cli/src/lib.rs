//! Experiment orchestration for the `iqn` command: config files, seeded
//! multi-run execution, checkpoints, CSV and summary output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod summary;

pub use config::{parse_config, parse_config_str, ExperimentConfig, ExperimentKind};
pub use error::{CliError, CliResult};
pub use experiments::{resume_experiment, run_experiment};
pub use plot::emit_plot_data;
pub use summary::RunSummary;
