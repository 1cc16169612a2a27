//! Experiment runner behind the `semctx` binary.

pub mod config;
pub mod run;

pub use config::{BackendKind, Experiment, FileConfig, Overrides, RunConfig};
pub use run::{execute, Manifest};
