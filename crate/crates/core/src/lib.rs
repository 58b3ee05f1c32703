//! Incomplete multi-view clustering with view-specific autoencoders,
//! hierarchical semantic alignment and cross-view latent completion.
//!
//! The usual pipeline is [`dataio::load_dataset`] or
//! [`dataio::synth_gaussian`], [`dataio::generate_mask`],
//! [`trainer::train`] and [`clustering::evaluate`].

#[cfg(feature = "openblas")]
extern crate blas_src;

pub mod alignment;
pub mod clustering;
pub mod completion;
pub mod dataio;
pub mod error;
pub mod network;
pub mod real;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
pub use real::Real;
