//! Command-line harness around the engine: strict run configurations,
//! dataset ingestion and generation, run orchestration, and report
//! emission. The binary in `main.rs` is a thin argument-parsing shell over
//! this library so that tests can drive commands in-process.

pub mod commands;
pub mod config;
pub mod container;
pub mod data;
pub mod manifest;

pub use commands::CliError;
pub use config::{parse_config, RunConfig};
