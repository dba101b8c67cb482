//! Experiment harness for the `sada` optimizers: TOML configs, replicated
//! runs, sweeps, artifact writers and the exact-oracle check suite.

pub mod config;
pub mod error;
pub mod harness;
pub mod oracle_check;
pub mod output;
pub mod sweep;

pub use error::{BenchError, Result};
