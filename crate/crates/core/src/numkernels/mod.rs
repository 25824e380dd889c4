//! Factorisation, optimisation and differentiation kernels.

pub mod cholesky;
pub mod finite_diff;
pub mod trust_region;

pub use cholesky::{cholesky, cholesky_with, CholeskyFactor, Storage};
pub use finite_diff::{fd_gradient, fd_hessian, gradient_step, hessian_step, try_fd_gradient, try_fd_hessian};
pub use trust_region::{
    trust_region_minimize, trust_region_minimize_with, SmoothObjective, TrustRegionOptions, TrustRegionResult,
};
