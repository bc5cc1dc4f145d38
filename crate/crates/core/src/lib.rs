//! Probabilistic-logic knowledge tracing with Beta-distribution embeddings.

pub mod betaembed;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod diffcore;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod patterns;
pub mod scoring;
pub mod training;

pub use error::{Error, Result};
