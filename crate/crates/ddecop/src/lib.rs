//! File formats and subcommands of the `ddecop` command-line tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod model_file;

pub use commands::{cmd_evaluate, cmd_fit, cmd_sample, cmd_simulate};
