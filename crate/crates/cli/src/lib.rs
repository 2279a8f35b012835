//! `carotid` command-line tool: phantom simulation, pose regularization,
//! reconstruction, longitudinal cuts, measurement and evaluation.
//!
//! Exit codes: 0 success, 1 the computation is undefined for valid input
//! (e.g. no vessel in any slice), 2 unreadable input or bad arguments.

pub mod cli;
pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;

pub use cli::Cli;
pub use commands::run;
pub use error::{CliError, CliResult};
