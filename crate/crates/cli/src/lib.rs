//! Configuration, orchestration and output for the `qpassage` command-line tool.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod units;

pub use config::RunConfig;
pub use error::{exit, CliError};
pub use run::{run, Command, Outcome};
