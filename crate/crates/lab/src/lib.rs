//! Files, experiment runner and command line around `sgg-fusion-core`.

pub mod ablation;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

pub use error::{LabError, Result};
