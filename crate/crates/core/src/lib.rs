//! Multitask structured prediction for community question answering.
//!
//! Three feed-forward networks ([`nn`]) learn task-specific embeddings for
//! comment goodness (A), question relatedness (B) and comment relevance (C).
//! A globally normalized pairwise CRF ([`crf`]) then performs joint inference
//! over a question group's [`factorgraph`], coupling the three subtasks.
//!
//! Data-parallel loops (per-graph inference and gradients, feature
//! extraction, seed sweeps) go through [`par::Exec`], which uses rayon when
//! the `parallel` feature is enabled and plain iterators otherwise.

pub mod crf;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod factorgraph;
pub mod features;
pub mod math;
pub mod nn;
pub mod par;
pub mod task;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use task::Task;

/// Seeded generator used everywhere randomness is needed.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
