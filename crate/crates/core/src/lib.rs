//! Collaborative deep learning for implicit-feedback recommendation.
//!
//! A Bayesian stacked denoising autoencoder learns item representations from
//! bag-of-words content while a confidence-weighted matrix factorization learns
//! user and item factors from binary feedback. The two are coupled through the
//! encoder output: every item factor is the encoding plus a Gaussian offset.
//!
//! Modules:
//! - [`dataio`]: ratings/content loading, normalization, corruption, splits, synthetic data
//! - [`sdae`]: the network, forward pass, encoder/reconstruction and exact gradients
//! - [`cf`]: closed-form user/item updates, prediction and the rating likelihood
//! - [`trainer`]: alternating MAP optimization and its degenerate variants
//! - [`bayes`]: Gibbs / Metropolis-within-Gibbs sampling with finite layer precision
//! - [`eval`]: ranking, recall@M, mAP@500, aggregation over repetitions

pub mod bayes;
pub mod cf;
pub mod dataio;
pub mod error;
pub mod eval;
mod linalg;
pub mod par;
pub mod rng;
pub mod sdae;
pub mod trainer;

pub use error::{CdlError, Checkpoint, Result};
