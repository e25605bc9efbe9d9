//! Configuration files, exported artifacts and the CLI scenarios.

pub mod commands;
pub mod config;
pub mod export;
pub mod svg;

pub use commands::{
    cmd_check, cmd_simulate, cmd_solve, cmd_sweep, CheckOptions, CommandError, Outcome,
};
pub use config::{load_config, parse_config, write_config, ConfigError, RunConfig};
