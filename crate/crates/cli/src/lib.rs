//! File formats, configuration and command-line front end for
//! [`mtmc_core`].

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod json;
pub mod report;

pub use error::CliError;
