//! Runner for [`rlgaf_core`]: run configuration, checkpoints, metrics and
//! rating logs, corpus files, the judge transport and the `rlgaf` CLI.
//!
//! A run is fixed by its [`config::RunConfig`] and the platform. Floating
//! point results are reproducible bit for bit on one machine and toolchain;
//! they are not promised across CPUs or compiler versions.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod judge;
pub mod metrics;
pub mod ratings;
pub mod run;

pub use config::RunConfig;
pub use error::{Result, RunError};
