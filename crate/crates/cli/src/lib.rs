//! Command-line front end for the BGV noise lab.
//!
//! Subcommands: `estimate`, `simulate`, `gaussianity`, `select-params` and
//! `compare`. Every output embeds the tool version, the effective settings,
//! the parameter fingerprint and the seed; the process exits non-zero when a
//! run raises an alarm.

pub mod cli;
pub mod commands;
pub mod error;
pub mod report;
pub mod settings;

pub use cli::Cli;
pub use commands::{run, Outcome};
pub use error::{CliError, Result};
