//! Library side of the `mgrpo-lab` command-line tool: configuration, run
//! directories, comparison summaries and SVG reports.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod svg;

pub use error::CliError;
