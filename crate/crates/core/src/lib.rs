//! Streaming accelerated optimization for generalized linear prediction.
//!
//! The crate provides problem instances with their constants, the inner/outer
//! hyperparameter schedule, the accelerated data-dependent proximal engine with
//! its weakly convex, unlabeled-data, mini-batch and parallel variants, two
//! baselines, and an exact small-dimension oracle for the engine's dynamics.

pub mod baselines;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod oracle;
pub mod problem;
pub mod schedule;
pub mod solver;
pub mod stream;
pub mod trace;

pub use error::{Error, Result};
