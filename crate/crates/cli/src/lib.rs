//! Configuration files, file formats and subcommands of the `meanflow` tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod verify;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig, Preset};
