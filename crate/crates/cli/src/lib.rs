//! File formats, checkpoints, reports and the `coopgraph` command line.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod history;
pub mod labels_io;
pub mod report;
pub mod scenario_io;
pub mod svg;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;
pub use error::{CliError, Result};
