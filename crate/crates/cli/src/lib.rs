//! Experiment runner: configuration, run persistence, comparison tables,
//! self-checks and plots.

pub mod compare;
pub mod config;
pub mod plot;
pub mod run;
pub mod verify;

pub use config::{ConfigError, Method, RunConfig, DEFAULT_SEEDS};
pub use run::{execute, load_report, persist, RunError, RunReport};
