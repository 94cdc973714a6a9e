//! Probabilistic Boolean matrix factorization.
//!
//! A binary matrix is modeled as a noisy-OR mixture of rank-`L` Bernoulli
//! factors whose parameters are optimized by full-batch resilient propagation
//! on sigmoid-reparameterized matrices. A scalar bit-flip probability is
//! estimated jointly with the factors in an EM loop, Beta priors regularize
//! the factor probabilities, and masked entries are excluded from every sum,
//! which makes the same machinery usable for binary matrix completion.
//!
//! The crate is organized as:
//! - [`matrix`]: dense real/binary matrices and the observation mask
//! - [`model`]: probabilities, objective, analytic gradients, reconstruction
//! - [`optimizer`]: iRprop- steps and the inner M-step loop
//! - [`em`]: the outer EM driver ([`em::fit`], [`em::complete`])
//! - [`synth`]: the density-calibrated synthetic benchmark sampler
//! - [`metrics`]: reconstruction error and held-out completion accuracy
//! - [`io`]: matrix file formats, ratings ingestion, hold-out splitting

pub mod em;
pub mod error;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod synth;

pub use error::{Error, Result};
