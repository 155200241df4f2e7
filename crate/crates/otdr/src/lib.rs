//! Files, configuration and commands around `otdr-core`.

pub mod commands;
pub mod config;
pub mod corpus_dir;
pub mod detect;
pub mod error;
pub mod fsio;
pub mod model_file;
pub mod reports;
pub mod trace_file;

pub use error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
