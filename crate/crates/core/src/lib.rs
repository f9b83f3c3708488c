//! Reject inference for credit scoring.
//!
//! Shallow self-learning, the classic benchmark strategies, the kickout
//! measure, a synthetic biased-lending generator and an experiment harness.

pub mod data;
pub mod error;
pub mod filtering;
pub mod learners;
pub mod metrics;
pub mod rng;
pub mod strategies;
pub mod harness;
pub mod synthgen;

pub use error::{Error, Result};
