//! File formats, TOML configuration, JSON-lines stage logs and the command
//! line for the `itemfm-core` pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod log;

pub use error::{Error, Result};
