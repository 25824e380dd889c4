//! The latent posterior as a `lambda`-weighted mixture of Gaussians
//! `N(w_hat_j, H_j^{-1})`.

use nalgebra::{DMatrix, DVector};

use super::FitResult;
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, std_normal_cdf, LN_2PI};

fn check_dim(fit: &FitResult, w: &DVector<f64>) -> Result<()> {
    if w.len() != fit.latent_dim() {
        return Err(Error::Dimension(format!(
            "point has length {} but the latent field has {}",
            w.len(),
            fit.latent_dim()
        )));
    }
    Ok(())
}

/// Log of the mixture density at `w`.
pub fn log_joint_density(fit: &FitResult, w: &DVector<f64>) -> Result<f64> {
    check_dim(fit, w)?;
    let m = w.len() as f64;
    let terms: Vec<f64> = fit
        .nodes
        .iter()
        .zip(fit.lambda())
        .map(|(node, &lam)| {
            let d = w - &node.mode;
            lam.ln() - 0.5 * m * LN_2PI + 0.5 * node.hessian.log_det() - 0.5 * node.hessian.quad_form(&d)
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

pub fn joint_density(fit: &FitResult, w: &DVector<f64>) -> Result<f64> {
    log_joint_density(fit, w).map(f64::exp)
}

/// Mean and covariance of the mixture.
pub fn mixture_moments(fit: &FitResult) -> (DVector<f64>, DMatrix<f64>) {
    let m = fit.latent_dim();
    let mut mean = DVector::zeros(m);
    let mut second = DMatrix::zeros(m, m);
    for (node, &lam) in fit.nodes.iter().zip(fit.lambda()) {
        if lam == 0.0 {
            continue;
        }
        mean.axpy(lam, &node.mode, 1.0);
        second += (node.hessian.inverse() + &node.mode * node.mode.transpose()) * lam;
    }
    let cov = second - &mean * mean.transpose();
    (mean, cov)
}

/// One latent coordinate's marginal: a univariate normal mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMarginal {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl LatentMarginal {
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * (s * s + (m - mu) * (m - mu)))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * std_normal_cdf((x - m) / s))
            .sum()
    }

    /// Inverse of [`Self::cdf`] by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let spread = self.sds.iter().fold(0.0f64, |a, &b| a.max(b));
        let (mut lo, mut hi) = self
            .means
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| (a.min(m), b.max(m)));
        lo -= 40.0 * spread;
        hi += 40.0 * spread;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Marginals of every latent coordinate, in latent order.
pub fn latent_marginals(fit: &FitResult) -> Vec<LatentMarginal> {
    let m = fit.latent_dim();
    let live: Vec<usize> = (0..fit.nodes.len()).filter(|&i| fit.lambda()[i] > 0.0).collect();
    let variances: Vec<DVector<f64>> = live.iter().map(|&i| fit.nodes[i].hessian.inverse().diagonal()).collect();
    (0..m)
        .map(|c| LatentMarginal {
            weights: live.iter().map(|&i| fit.lambda()[i]).collect(),
            means: live.iter().map(|&i| fit.nodes[i].mode[c]).collect(),
            sds: variances.iter().map(|v| v[c].sqrt()).collect(),
        })
        .collect()
}

/// Marginal of latent coordinate `c`.
pub fn latent_marginal(fit: &FitResult, c: usize) -> Result<LatentMarginal> {
    if c >= fit.latent_dim() {
        return Err(Error::InvalidArgument(format!(
            "latent coordinate {c} requested, field has {}",
            fit.latent_dim()
        )));
    }
    let mut out = LatentMarginal {
        weights: Vec::new(),
        means: Vec::new(),
        sds: Vec::new(),
    };
    let mut e = DVector::zeros(fit.latent_dim());
    e[c] = 1.0;
    for (node, &lam) in fit.nodes.iter().zip(fit.lambda()) {
        if lam > 0.0 {
            out.weights.push(lam);
            out.means.push(node.mode[c]);
            out.sds.push(node.hessian.solve(&e)[c].sqrt());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{fit, FitConfig};
    use crate::model::conjugate_gaussian;
    use approx::assert_relative_eq;

    #[test]
    fn conjugate_mixture_is_the_exact_posterior() {
        let f = fit(&conjugate_gaussian(&[1.0; 4]).unwrap(), &FitConfig::default()).unwrap();
        let w = DVector::from_element(1, 0.5);
        let want = -0.5 * LN_2PI + 0.5 * 5f64.ln() - 0.5 * 5.0 * 0.09;
        assert_relative_eq!(log_joint_density(&f, &w).unwrap(), want, epsilon = 1e-10);
        let (mean, cov) = mixture_moments(&f);
        assert_relative_eq!(mean[0], 0.8, epsilon = 1e-10);
        assert_relative_eq!(cov[(0, 0)], 0.2, epsilon = 1e-12);
        let marg = latent_marginal(&f, 0).unwrap();
        assert_relative_eq!(marg.quantile(0.5), 0.8, epsilon = 1e-9);
        assert_relative_eq!(marg.cdf(0.8 + 0.2f64.sqrt()), std_normal_cdf(1.0), epsilon = 1e-9);
        assert_eq!(latent_marginals(&f)[0], marg);
        assert!(log_joint_density(&f, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn two_component_moments() {
        let mix = LatentMarginal {
            weights: vec![0.25, 0.75],
            means: vec![-1.0, 1.0],
            sds: vec![1.0, 2.0],
        };
        assert_relative_eq!(mix.mean(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(mix.variance(), 0.25 + 3.0 + 0.25 * 2.25 + 0.75 * 0.25, epsilon = 1e-14);
        assert_relative_eq!(mix.cdf(mix.quantile(0.3)), 0.3, epsilon = 1e-12);
    }
}
