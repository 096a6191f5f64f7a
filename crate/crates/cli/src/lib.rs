//! Experiment runner and command-line front end for `jkext`.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod table;

pub use commands::cli_dispatch;
pub use config::{ExperimentConfig, ExperimentKind, OutputFormat};
pub use experiments::run_experiment;
pub use table::{Cell, ResultRow};
