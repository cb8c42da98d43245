//! Sequential Bayesian inference for batched multinomial counts whose cell
//! probabilities vary randomly from batch to batch.
//!
//! Each batch is mapped through a variance-stabilizing arcsine transform
//! ([`vst`]); the transformed batches are fitted with a hierarchical
//! normal / inverse-Wishart model by Gibbs sampling ([`model`]); posterior
//! predictive simulation of the remaining batches ([`forecast`]) feeds the
//! race-calling and market-share decision rules ([`decisions`]). The
//! [`simlab`] module holds the data-generating processes and the
//! replication experiments.

pub mod decisions;
pub mod error;
pub mod forecast;
pub mod model;
pub mod simlab;
pub mod stochastics;
pub mod summary;
pub mod vst;

pub use error::{Error, Result};
