//! Bayesian small-area estimation for area × quarter labour-market panels.
//!
//! The crate fits spatio-temporal hierarchical GLMMs (Poisson, negative
//! binomial, binomial, beta and multinomial likelihoods with ICAR / RW1 /
//! i.i.d. random effects) by adaptive Metropolis-within-Gibbs, and provides
//! the usual model-checking toolkit: DIC, CPO, PIT, log score, RRMSE and a
//! design-based direct estimator to compare against.
//!
//! Typical flow:
//!
//! 1. [`data::load_panel`] + [`data::load_adjacency`] (or [`simulate::simulate`])
//! 2. [`model::ModelSpec`] describing family, terms and priors
//! 3. [`inference::fit`] to obtain [`inference::PosteriorSamples`]
//! 4. [`inference::summarize`], [`diagnostics`] for reports

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod latent;
pub mod likelihood;
pub mod model;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
