//! Approximate Bayesian inference for extended latent Gaussian models.
//!
//! The conditional posterior of the latent field is approximated by a Gaussian
//! at its mode, the hyperparameter posterior by a marginal Laplace
//! approximation, and the hyperparameters are integrated out with an adaptive
//! Gauss-Hermite product rule. The result is a Gaussian mixture that can be
//! evaluated and sampled exactly.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inference;
pub mod io_sim;
pub mod math;
pub mod model;
pub mod numkernels;
pub mod par;
pub mod quadrature;
pub mod validation;

pub use error::{Error, Result};
