//! Experiment drivers behind the `relreg` binary.

pub mod commands;
pub mod config;

pub use commands::execute;
pub use config::{Command, RunConfig, Variant};
