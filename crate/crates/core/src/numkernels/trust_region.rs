//! Newton trust-region minimisation with a dogleg step.

use nalgebra::{DMatrix, DVector};

use super::cholesky::{cholesky_with, CholeskyFactor, Storage};
use crate::error::{Error, Result};

/// A twice-differentiable objective to be minimised.
///
/// An error from `value` at a trial point rejects the step; errors from the
/// derivatives abort the minimisation.
pub trait SmoothObjective {
    fn value(&self, w: &DVector<f64>) -> Result<f64>;
    fn gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>>;
    fn hessian(&self, w: &DVector<f64>) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct TrustRegionOptions {
    /// Gradient infinity-norm at which to stop.
    pub tol: f64,
    pub max_iter: usize,
    /// Storage for Hessian factorisations.
    pub storage: Storage,
}

impl Default for TrustRegionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            storage: Storage::Dense,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrustRegionResult {
    pub minimizer: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Factor of the objective Hessian at the minimiser.
    pub hessian_at_opt: CholeskyFactor,
    pub iterations: usize,
    pub converged: bool,
}

const ACCEPT_RATIO: f64 = 1e-4;
const MAX_RADIUS: f64 = 1e10;

/// Minimises `f` from `w0` with the given gradient tolerance.
pub fn trust_region_minimize<F: SmoothObjective + ?Sized>(
    f: &F,
    w0: &DVector<f64>,
    tol: f64,
) -> Result<TrustRegionResult> {
    trust_region_minimize_with(
        f,
        w0,
        &TrustRegionOptions {
            tol,
            ..TrustRegionOptions::default()
        },
    )
}

pub fn trust_region_minimize_with<F: SmoothObjective + ?Sized>(
    f: &F,
    w0: &DVector<f64>,
    opts: &TrustRegionOptions,
) -> Result<TrustRegionResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let mut w = w0.clone();
    let mut fw = f.value(&w)?;
    if !fw.is_finite() {
        return Err(Error::InvalidStart);
    }
    let mut g = f.gradient(&w)?;
    let mut h = f.hessian(&w)?;
    let mut radius: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = g.amax() <= opts.tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let newton = cholesky_with(&h, opts.storage).ok().map(|c| -c.solve(&g));
        let delta = *radius.get_or_insert_with(|| match &newton {
            Some(p) if p.norm() > 0.0 => p.norm(),
            _ => 1.0,
        });
        let p = dogleg(&g, &h, newton.as_ref(), delta);
        let p_norm = p.norm();
        let predicted = -(g.dot(&p) + 0.5 * (p.transpose() * &h * &p)[(0, 0)]);
        let trial = &w + &p;
        let f_trial = f.value(&trial).unwrap_or_else(|e| {
            log::debug!("trial point rejected: {e}");
            f64::NAN
        });
        let actual = fw - f_trial;
        let noise = 64.0 * f64::EPSILON * fw.abs().max(1.0);

        let ratio = if !f_trial.is_finite() {
            f64::NEG_INFINITY
        } else if predicted.abs() <= noise && actual >= -noise {
            // Both reductions are at the rounding level of f; trust the model.
            1.0
        } else if predicted > 0.0 {
            actual / predicted
        } else if actual > 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        };

        let mut delta = delta;
        if ratio < 0.25 {
            delta = 0.25 * delta.min(p_norm);
        } else if ratio > 0.75 && p_norm >= 0.99 * delta {
            delta = (2.0 * delta).min(MAX_RADIUS);
        }
        radius = Some(delta);

        if ratio > ACCEPT_RATIO {
            w = trial;
            fw = f_trial;
            g = f.gradient(&w)?;
            h = f.hessian(&w)?;
            converged = g.amax() <= opts.tol;
        } else if delta <= f64::EPSILON * w.norm().max(1.0) {
            log::debug!("trust region collapsed after {iterations} iterations");
            break;
        }
    }

    let hessian_at_opt = cholesky_with(&h, opts.storage)?;
    Ok(TrustRegionResult {
        grad_norm: g.amax(),
        minimizer: w,
        value: fw,
        hessian_at_opt,
        iterations,
        converged,
    })
}

/// Dogleg step for the model `g^T p + p^T H p / 2` inside a ball of radius `delta`.
fn dogleg(g: &DVector<f64>, h: &DMatrix<f64>, newton: Option<&DVector<f64>>, delta: f64) -> DVector<f64> {
    if let Some(pn) = newton {
        if pn.norm() <= delta {
            return pn.clone();
        }
    }
    let gg = g.norm_squared();
    let g_norm = gg.sqrt();
    if g_norm == 0.0 {
        return newton.map(|p| p * (delta / p.norm())).unwrap_or_else(|| DVector::zeros(g.len()));
    }
    let ghg = (g.transpose() * h * g)[(0, 0)];
    let cauchy = if ghg > 0.0 { g * (-gg / ghg) } else { g * (-delta / g_norm) };
    let c_norm = cauchy.norm();
    if c_norm >= delta {
        return cauchy * (delta / c_norm);
    }
    let Some(pn) = newton else {
        return cauchy;
    };
    // point where the segment cauchy -> newton leaves the ball
    let d = pn - &cauchy;
    let a = d.norm_squared();
    let b = 2.0 * cauchy.dot(&d);
    let c = cauchy.norm_squared() - delta * delta;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    let tau = if b >= 0.0 { 2.0 * (-c) / (b + disc) } else { (-b + disc) / (2.0 * a) };
    cauchy + d * tau.clamp(0.0, 1.0)
}
