//! Command-line driver for the `lsmc` pricing library.

pub mod commands;
pub mod config;
pub mod error;

pub use error::CliError;
