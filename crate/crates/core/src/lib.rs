//! Query-diversity defense for graph encoders served behind an API.
//!
//! The defense assigns every query to the nearest community of the target's
//! training graph and tracks, per account, which fraction of communities has
//! been touched. That fraction drives calibrated output perturbation: label
//! flips for posterior outputs, Gaussian noise for embeddings and for their
//! 2-D projections. Benign users whose queries stay inside a few communities
//! see almost untouched outputs, while extraction attacks that sample the
//! graph broadly receive outputs too noisy to train a surrogate on.
//!
//! The crate also carries the adversary side (query selection, surrogate
//! training, noise averaging, Sybil remapping) and a seeded experiment harness.

pub mod attack;
pub mod community;
pub mod defense;
mod error;
pub mod graph;
pub mod harness;
mod kv;
pub mod model;
pub mod par;
pub mod seed;

pub use error::{Error, Result};
pub use graph::Graph;
