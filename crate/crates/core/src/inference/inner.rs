//! Conditional modes of the latent field and the Laplace approximation to
//! the hyperparameter marginal.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::LN_2PI;
use crate::model::LatentModel;
use crate::numkernels::{
    cholesky_with, trust_region_minimize_with, CholeskyFactor, SmoothObjective, TrustRegionOptions,
};

/// Maximum trust-region iterations for one inner solve.
pub const INNER_MAX_ITER: usize = 200;

/// The latent mode at one hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub theta: DVector<f64>,
    pub mode: DVector<f64>,
    /// Factor of the negative Hessian of the log joint at the mode.
    pub hessian: CholeskyFactor,
    /// `log pi(w_hat, theta, y) + (m/2) log 2pi - log|H|/2`.
    pub log_laplace: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl InnerSolution {
    pub fn latent_dim(&self) -> usize {
        self.mode.len()
    }
}

struct NegLogJoint<'a, M: ?Sized> {
    model: &'a M,
    theta: &'a DVector<f64>,
}

impl<M: LatentModel + ?Sized> SmoothObjective for NegLogJoint<'_, M> {
    fn value(&self, w: &DVector<f64>) -> Result<f64> {
        Ok(-self.model.log_joint(w, self.theta))
    }

    fn gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-self.model.grad_w(w, self.theta))
    }

    fn hessian(&self, w: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.model.hessian_w(w, self.theta))
    }
}

/// Maximises the log joint over `w` at fixed `theta`.
///
/// Starts from `warm_start` when the log joint is finite there, otherwise
/// from zero.
pub fn inner_solve<M: LatentModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    warm_start: Option<&DVector<f64>>,
    tol: f64,
) -> Result<InnerSolution> {
    let m = model.latent_dim();
    if theta.len() != model.hyper_dim() {
        return Err(Error::Dimension(format!(
            "theta has length {} but the model has {} hyperparameters",
            theta.len(),
            model.hyper_dim()
        )));
    }
    if m == 0 {
        let w = DVector::zeros(0);
        let value = model.log_joint(&w, theta);
        if !value.is_finite() {
            return Err(Error::NonFiniteEvaluation {
                point: theta.iter().copied().collect(),
                value,
            });
        }
        return Ok(InnerSolution {
            theta: theta.clone(),
            hessian: cholesky_with(&DMatrix::zeros(0, 0), model.storage())?,
            mode: w,
            log_laplace: value,
            iterations: 0,
            grad_norm: 0.0,
        });
    }

    let start = warm_start
        .filter(|w| w.len() == m && model.log_joint(w, theta).is_finite())
        .cloned()
        .unwrap_or_else(|| DVector::zeros(m));
    let objective = NegLogJoint { model, theta };
    let opts = TrustRegionOptions {
        tol,
        max_iter: INNER_MAX_ITER,
        storage: model.storage(),
    };
    let r = trust_region_minimize_with(&objective, &start, &opts)?;
    if !r.converged {
        return Err(Error::InnerNonConvergence {
            theta: theta.iter().copied().collect(),
            iterations: r.iterations,
            grad_norm: r.grad_norm,
        });
    }
    let log_laplace = -r.value + 0.5 * m as f64 * LN_2PI - 0.5 * r.hessian_at_opt.log_det();
    Ok(InnerSolution {
        theta: theta.clone(),
        mode: r.minimizer,
        hessian: r.hessian_at_opt,
        log_laplace,
        iterations: r.iterations,
        grad_norm: r.grad_norm,
    })
}

/// Recently computed modes, used to warm-start nearby inner solves.
#[derive(Debug)]
pub struct WarmStarts {
    capacity: usize,
    entries: Mutex<Vec<(DVector<f64>, DVector<f64>)>>,
}

impl WarmStarts {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: Mutex::new(Vec::new()),
        }
    }

    /// Mode stored for the hyperparameter value closest to `theta`.
    pub fn nearest(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        entries
            .iter()
            .min_by(|a, b| (&a.0 - theta).norm().total_cmp(&(&b.0 - theta).norm()))
            .map(|(_, w)| w.clone())
    }

    pub fn insert(&self, theta: &DVector<f64>, mode: &DVector<f64>) {
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        if entries.len() == self.capacity {
            entries.remove(0);
        }
        entries.push((theta.clone(), mode.clone()));
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Laplace approximation at `theta`, warm-started from the nearest cached mode.
pub fn laplace_objective<M: LatentModel + ?Sized>(
    model: &M,
    theta: &DVector<f64>,
    tol: f64,
    cache: &WarmStarts,
) -> Result<InnerSolution> {
    let start = cache.nearest(theta);
    let sol = inner_solve(model, theta, start.as_ref(), tol)?;
    cache.insert(theta, &sol.mode);
    Ok(sol)
}
