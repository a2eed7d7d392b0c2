//! Command-line front end for the conditional scenario generator.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod resolve;

pub use error::{CliError, Result};
