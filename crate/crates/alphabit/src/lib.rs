//! File formats and the batch driver around `alphabit-core`.
//!
//! Each subcommand of the `alphabit` binary is a function in [`commands`]
//! taking a [`config::RunConfig`]. Every command writes its files atomically
//! and finishes with a `manifest_<command>.json` listing the effective config
//! and a SHA-256 of each output.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::RunConfig;
pub use error::{AppError, Result};
