//! Batch pipeline for probe-navigation experiments.
//!
//! Commands mirror the binary's verbs: `simulate` writes a synthetic corpus,
//! `train` fits one head, `eval` reports MAE, `scale-curve` sweeps the graph
//! size, `ablate` runs the model x sampler grid. All of them are library
//! functions first, so tests and sweeps run in-process.

pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;
pub mod svg;
pub mod train;

pub use config::RunConfig;
pub use error::CliError;
