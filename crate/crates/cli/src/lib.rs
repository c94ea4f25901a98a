//! File formats, manifests, the parallel sweep harness and the `mnfret`
//! command line, on top of `mnfret-core`.

pub mod commands;
pub mod error;
pub mod format;
pub mod manifest;
pub mod pgm;
pub mod sweep;

pub use error::{exit, CliError, CliResult};
