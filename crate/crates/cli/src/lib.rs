//! File formats, experiment configuration and the subcommands behind the
//! `sis` binary.

pub mod commands;
pub mod config;
mod error;
pub mod nmat;
pub mod run;

pub use error::{CliError, Result};
