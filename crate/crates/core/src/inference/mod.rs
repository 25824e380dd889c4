//! Nested Laplace approximation with adaptive Gauss-Hermite quadrature over
//! the hyperparameters.

pub mod hyper;
pub mod inner;
pub mod mixture;
pub mod sampler;
pub mod summaries;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentModel, Transform};
use crate::numkernels::{
    cholesky, gradient_step, trust_region_minimize_with, try_fd_gradient, try_fd_hessian, SmoothObjective,
    Storage, TrustRegionOptions,
};
use crate::par;
use crate::quadrature::{adapt, product_rule, AdaptedGrid, MAX_ORDER};

pub use hyper::{HyperDensity, HyperMarginal};
pub use inner::{inner_solve, laplace_objective, InnerSolution, WarmStarts};
pub use mixture::{
    joint_density, latent_marginal, latent_marginals, log_joint_density, mixture_moments, LatentMarginal,
};
pub use sampler::{sample_posterior, SampleBatch};
pub use summaries::{hyper_summaries, latent_summaries, HyperSummary, ParamSummary};

/// Settings for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Gauss-Hermite points per hyperparameter.
    pub k: usize,
    pub tol_inner: f64,
    pub tol_outer: f64,
    /// Iteration cap for the outer optimisation.
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 3,
            tol_inner: 1e-8,
            tol_outer: 1e-6,
            max_iter: 200,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_ORDER {
            return Err(Error::InvalidOrder { k: self.k, max: MAX_ORDER });
        }
        for (name, v) in [("tol_inner", self.tol_inner), ("tol_outer", self.tol_outer)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the outer optimisation ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStats {
    pub iterations: usize,
    pub grad_norm: f64,
    /// Gradient tolerance actually used: the requested one, raised to the
    /// rounding floor of the differenced objective when that is larger.
    pub effective_tol: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub outer_seconds: f64,
    pub grid_seconds: f64,
}

/// A fitted posterior: the adapted grid, the latent mode and curvature at
/// every node, and the marginal likelihood estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub config: FitConfig,
    pub latent_names: Vec<String>,
    pub hyper_names: Vec<String>,
    pub transforms: Vec<Transform>,
    pub theta_hat: DVector<f64>,
    /// Negative Hessian of the log Laplace marginal at `theta_hat`.
    pub outer_hessian: DMatrix<f64>,
    pub grid: AdaptedGrid,
    /// Inner solutions, one per grid node in grid order.
    pub nodes: Vec<InnerSolution>,
    pub log_evidence: f64,
    pub outer: OuterStats,
    pub timings: Timings,
}

impl FitResult {
    pub fn latent_dim(&self) -> usize {
        self.latent_names.len()
    }

    pub fn hyper_dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.grid.lambda
    }

    /// Index of the node with the largest log value.
    pub fn best_node(&self) -> usize {
        let lv = &self.grid.log_values;
        (0..lv.len()).fold(0, |b, i| if lv[i] > lv[b] { i } else { b })
    }
}

const OUTER_NOISE_FACTOR: f64 = 16.0;

/// Smallest gradient norm a central difference of `f` can resolve near `theta`.
fn noise_floor(f: f64, theta: &DVector<f64>) -> f64 {
    let scale = theta.amax();
    OUTER_NOISE_FACTOR * f64::EPSILON * f.abs().max(1.0) / gradient_step(scale)
}

/// Negative log Laplace marginal as a function of the hyperparameters.
struct OuterObjective<'a, M: ?Sized> {
    model: &'a M,
    tol: f64,
    cache: WarmStarts,
}

impl<M: LatentModel + ?Sized> OuterObjective<'_, M> {
    fn log_laplace(&self, theta: &DVector<f64>) -> Result<f64> {
        laplace_objective(self.model, theta, self.tol, &self.cache).map(|s| s.log_laplace)
    }
}

impl<M: LatentModel + ?Sized> SmoothObjective for OuterObjective<'_, M> {
    fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(-self.log_laplace(theta)?)
    }

    fn gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-try_fd_gradient(|t| self.log_laplace(t), theta)?)
    }

    fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-try_fd_hessian(|t| self.log_laplace(t), theta)?)
    }
}

/// Fits `model`: maximise the Laplace marginal over the hyperparameters,
/// adapt a `k^s` Gauss-Hermite grid to the mode and curvature found there,
/// and solve the inner problem at every node.
pub fn fit<M: LatentModel + ?Sized>(model: &M, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if config.k.is_multiple_of(2) {
        log::warn!("even order k = {} puts no grid node at the mode", config.k);
    }
    let s = model.hyper_dim();
    let started = Instant::now();
    let objective = OuterObjective {
        model,
        tol: config.tol_inner,
        cache: WarmStarts::new(64),
    };

    let (theta_hat, outer) = if s == 0 {
        let stats = OuterStats {
            iterations: 0,
            grad_norm: 0.0,
            effective_tol: config.tol_outer,
            converged: true,
        };
        (DVector::zeros(0), stats)
    } else {
        maximise_outer(&objective, s, config)?
    };

    let (outer_hessian, cholesky_l) = if s == 0 {
        (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
    } else {
        let h = -try_fd_hessian(|t| objective.log_laplace(t), &theta_hat)?;
        let factor = cholesky(&h)?;
        if factor.jitter() > 0.0 {
            log::warn!("outer curvature needed jitter {:.3e} to factor", factor.jitter());
        }
        let cov = factor.inverse();
        let l = crate::numkernels::cholesky_with(&cov, Storage::Dense)?.to_dense_l();
        (h, l)
    };
    let outer_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let center = laplace_objective(model, &theta_hat, config.tol_inner, &objective.cache)?;
    let rule = product_rule(s, config.k)?;
    let adapted = adapt(&rule, &theta_hat, &cholesky_l)?;
    let nodes: Vec<InnerSolution> = par::map_indices(adapted.points.len(), |i| {
        inner_solve(model, &adapted.points[i], Some(&center.mode), config.tol_inner)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let log_values = nodes.iter().map(|n| n.log_laplace).collect();
    let grid = AdaptedGrid::from_parts(&rule, theta_hat.clone(), cholesky_l, adapted.points, log_values)?;
    let log_evidence = grid.log_normalizer();
    let grid_seconds = started.elapsed().as_secs_f64();

    Ok(FitResult {
        config: *config,
        latent_names: model.latent_names(),
        hyper_names: model.hyper_names(),
        transforms: model.hyper_transforms(),
        theta_hat,
        outer_hessian,
        grid,
        nodes,
        log_evidence,
        outer,
        timings: Timings {
            outer_seconds,
            grid_seconds,
        },
    })
}

fn maximise_outer<M: LatentModel + ?Sized>(
    objective: &OuterObjective<'_, M>,
    s: usize,
    config: &FitConfig,
) -> Result<(DVector<f64>, OuterStats)> {
    let start = DVector::zeros(s);
    let f0 = objective.value(&start)?;
    let tol = config.tol_outer.max(noise_floor(f0, &start));
    let opts = TrustRegionOptions {
        tol,
        max_iter: config.max_iter,
        storage: Storage::Dense,
    };
    let r = trust_region_minimize_with(objective, &start, &opts)?;
    let effective_tol = config.tol_outer.max(noise_floor(r.value, &r.minimizer));
    let converged = r.converged || r.grad_norm <= effective_tol;
    if !converged {
        return Err(Error::OuterNonConvergence {
            iterations: r.iterations,
            grad_norm: r.grad_norm,
        });
    }
    log::debug!(
        "outer optimisation: {} iterations, gradient {:.3e}",
        r.iterations,
        r.grad_norm
    );
    Ok((
        r.minimizer,
        OuterStats {
            iterations: r.iterations,
            grad_norm: r.grad_norm,
            effective_tol,
            converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::LN_2PI;
    use crate::model::{conjugate_gaussian, gaussian_scale};
    use approx::assert_relative_eq;

    #[test]
    fn conjugate_fit_has_one_node_and_exact_evidence() {
        let model = conjugate_gaussian(&[1.0; 4]).unwrap();
        let fit = fit(&model, &FitConfig::default()).unwrap();
        assert_eq!(fit.grid.len(), 1);
        assert_eq!(fit.lambda(), &[1.0]);
        let want = -2.0 * LN_2PI - 0.5 * 5f64.ln() - 0.4;
        assert_relative_eq!(fit.log_evidence, want, epsilon = 1e-12);
        assert_relative_eq!(fit.nodes[0].mode[0], 0.8, epsilon = 1e-10);
    }

    #[test]
    fn scale_model_grid_centres_on_mode() {
        let y = [0.9, -1.3, 0.2, 2.1, -0.4, 1.0, -0.8];
        let model = gaussian_scale(&y).unwrap();
        let cfg = FitConfig { k: 5, ..Default::default() };
        let fit = fit(&model, &cfg).unwrap();
        assert!(fit.outer.converged);
        assert_eq!(fit.grid.len(), 5);
        let c = fit.grid.center_index().unwrap();
        assert_eq!(fit.grid.nodes[c], fit.theta_hat);
        assert_eq!(fit.best_node(), c);
        let total: f64 = fit.lambda().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        // the mode of the exact marginal solves n/2 - ss/(2v) + theta = 0
        let ss: f64 = y.iter().map(|v| v * v).sum();
        let g = |t: f64| 3.5 - 0.5 * ss * (-t).exp() + t;
        assert!(g(fit.theta_hat[0]).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_config() {
        let model = conjugate_gaussian(&[1.0]).unwrap();
        for cfg in [
            FitConfig { k: 0, ..Default::default() },
            FitConfig { tol_inner: 0.0, ..Default::default() },
            FitConfig { tol_outer: f64::NAN, ..Default::default() },
        ] {
            assert!(fit(&model, &cfg).is_err());
        }
    }

    #[test]
    fn noise_floor_scales_with_objective() {
        let t = DVector::zeros(1);
        assert!(noise_floor(1e5, &t) > 100.0 * noise_floor(1.0, &t));
        assert!(noise_floor(1.0, &t) < 1e-8);
    }
}
