//! The `pcmotion` pipeline: simulate, metric, train, estimate, plot export,
//! and the sensor / edge-server processes.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;

pub use commands::*;
pub use config::ConfigFile;
pub use error::CliError;
