//! One-class collaborative filtering with the Attentive Multi-modal AutoRec
//! (AMA) model.
//!
//! A user is represented by `d` preference modes. Each mode attends over the
//! user's observed items through fixed SVD item embeddings, and a maxout
//! decoder scores every item by its best-matching mode, so each
//! recommendation can be traced back to the mode and the history items
//! that produced it.
//!
//! The crate covers the whole pipeline:
//!
//! - [`dataset`]: rating parsing, binarization, per-user temporal splits
//! - [`linalg`]: dense kernels and randomized truncated SVD
//! - [`model`]: the encoder, decoder, loss and exact gradients
//! - [`training`]: minibatch denoising training with Adam or SGD
//! - [`baselines`]: popularity and PureSVD scorers
//! - [`eval`]: top-N ranking metrics with confidence intervals
//! - [`explain`]: attention reports and mode-usage statistics
//! - [`config`]: flat `key = value` run configuration and presets

pub mod baselines;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod linalg;
pub mod model;
pub mod training;

pub use error::{Error, Result};
