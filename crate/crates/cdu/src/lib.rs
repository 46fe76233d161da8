//! Configuration, datasets, checkpoints, results and figures for `cdu-core`.

pub use cdu_core as core;

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod figures;
pub mod history;
pub mod manifest;
pub mod pipeline;
pub mod results;
pub mod tensors;
