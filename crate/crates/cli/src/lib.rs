//! Command-line front end: rounds files, run configuration and the
//! `simulate`, `fit`, `call` and `replicate` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod rounds;

pub use error::{CliError, CliResult};
