//! Command-line front end for `kyle-core`: configuration and certificate
//! documents, the `kyle` subcommands, and seeded random game sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod sweep;

pub use commands::{run, Cli};
pub use error::{CliError, Exit};
