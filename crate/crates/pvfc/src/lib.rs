//! File formats, model persistence, run configuration and the command
//! implementations behind the `pvfc` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod persist;

pub use commands::{run, Command, Outcome, Selection};
pub use config::RunConfig;
pub use error::{PvfcError, Result};
