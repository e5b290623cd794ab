//! File formats, parallel fan-out, reports and the command line for
//! [`gme_core`].

pub mod cli;
pub mod error;
pub mod format;
pub mod manifest;
pub mod parallel;
pub mod report;

pub use error::{CliError, CliResult};
