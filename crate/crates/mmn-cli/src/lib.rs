//! Command-line front end for the `mmn` library.

pub mod commands;
pub mod error;
pub mod io;
pub mod record;

pub use commands::{run, Cli, Command};
pub use error::CliError;
