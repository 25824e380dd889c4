//! Posterior means, standard deviations and quantiles.

use serde::{Deserialize, Serialize};

use super::hyper::HyperDensity;
use super::mixture::latent_marginals;
use super::FitResult;
use crate::error::Result;
use crate::model::Transform;

/// Quantile levels reported alongside each summary.
pub const QUANTILES: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    /// Unavailable from a single-node grid.
    pub sd: Option<f64>,
    pub q025: Option<f64>,
    pub q50: Option<f64>,
    pub q975: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSummary {
    pub unconstrained: ParamSummary,
    pub natural: ParamSummary,
}

fn unconstrained_name(name: &str, t: Transform) -> String {
    match t {
        Transform::Identity => name.to_owned(),
        Transform::Log => format!("log_{name}"),
    }
}

/// Summaries of each hyperparameter on the optimisation scale and on its
/// natural scale.
///
/// Means and standard deviations on the optimisation scale are node-weighted
/// sums; quantiles and natural-scale moments come from the continuous
/// density through the grid.
pub fn hyper_summaries(fit: &FitResult) -> Result<Vec<HyperSummary>> {
    let s = fit.hyper_dim();
    let lambda = fit.lambda();
    let single = fit.grid.len() == 1;
    let density = if single { None } else { Some(HyperDensity::new(fit)?) };
    (0..s)
        .map(|j| {
            let t = fit.transforms.get(j).copied().unwrap_or(Transform::Identity);
            let name = fit.hyper_names.get(j).cloned().unwrap_or_else(|| format!("theta[{j}]"));
            let mean: f64 = fit.grid.nodes.iter().zip(lambda).map(|(n, l)| l * n[j]).sum();
            let Some(density) = &density else {
                return Ok(HyperSummary {
                    unconstrained: ParamSummary {
                        name: unconstrained_name(&name, t),
                        mean,
                        sd: None,
                        q025: None,
                        q50: None,
                        q975: None,
                    },
                    natural: ParamSummary {
                        name,
                        mean: t.constrain(mean),
                        sd: None,
                        q025: None,
                        q50: None,
                        q975: None,
                    },
                });
            };
            let var: f64 = fit
                .grid
                .nodes
                .iter()
                .zip(lambda)
                .map(|(n, l)| l * (n[j] - mean).powi(2))
                .sum();
            let marginal = density.marginal(j)?;
            let q = QUANTILES.map(|p| marginal.quantile(p));
            let nat_mean = marginal.expect(|x| t.constrain(x));
            let nat_var = marginal.expect(|x| (t.constrain(x) - nat_mean).powi(2));
            Ok(HyperSummary {
                unconstrained: ParamSummary {
                    name: unconstrained_name(&name, t),
                    mean,
                    sd: Some(var.max(0.0).sqrt()),
                    q025: Some(q[0]),
                    q50: Some(q[1]),
                    q975: Some(q[2]),
                },
                natural: ParamSummary {
                    name,
                    mean: nat_mean,
                    sd: Some(nat_var.max(0.0).sqrt()),
                    q025: Some(t.constrain(q[0])),
                    q50: Some(t.constrain(q[1])),
                    q975: Some(t.constrain(q[2])),
                },
            })
        })
        .collect()
}

/// Summaries of every latent coordinate under the Gaussian mixture.
pub fn latent_summaries(fit: &FitResult) -> Vec<ParamSummary> {
    latent_marginals(fit)
        .into_iter()
        .enumerate()
        .map(|(c, m)| ParamSummary {
            name: fit.latent_names.get(c).cloned().unwrap_or_else(|| format!("w[{c}]")),
            mean: m.mean(),
            sd: Some(m.variance().max(0.0).sqrt()),
            q025: Some(m.quantile(QUANTILES[0])),
            q50: Some(m.quantile(QUANTILES[1])),
            q975: Some(m.quantile(QUANTILES[2])),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{fit, FitConfig};
    use crate::model::{conjugate_gaussian, gaussian_scale};
    use approx::assert_relative_eq;

    #[test]
    fn single_node_flags_spread_unavailable() {
        let f = fit(&gaussian_scale(&[0.5, 1.5, -0.7]).unwrap(), &FitConfig { k: 1, ..Default::default() }).unwrap();
        let s = hyper_summaries(&f).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].unconstrained.name, "log_variance");
        assert_eq!(s[0].unconstrained.mean, f.theta_hat[0]);
        assert!(s[0].unconstrained.sd.is_none() && s[0].natural.q50.is_none());
        assert_relative_eq!(s[0].natural.mean, f.theta_hat[0].exp(), epsilon = 1e-15);
    }

    #[test]
    fn natural_scale_quantiles_are_transformed() {
        let f = fit(&gaussian_scale(&[0.5, 1.5, -0.7, 0.2]).unwrap(), &FitConfig { k: 7, ..Default::default() }).unwrap();
        let s = &hyper_summaries(&f).unwrap()[0];
        let (u, n) = (&s.unconstrained, &s.natural);
        assert!(u.q025.unwrap() < u.q50.unwrap() && u.q50.unwrap() < u.q975.unwrap());
        assert_relative_eq!(n.q975.unwrap(), u.q975.unwrap().exp(), epsilon = 1e-12);
        // Jensen: E[exp(theta)] exceeds exp(E[theta])
        assert!(n.mean > u.mean.exp());
    }

    #[test]
    fn latent_summary_of_conjugate_model() {
        let f = fit(&conjugate_gaussian(&[1.0; 4]).unwrap(), &FitConfig::default()).unwrap();
        let s = latent_summaries(&f);
        assert_eq!(s[0].name, "w");
        assert_relative_eq!(s[0].mean, 0.8, epsilon = 1e-10);
        assert_relative_eq!(s[0].sd.unwrap(), 0.2f64.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(s[0].q975.unwrap(), 0.8 + 1.959_963_984_540_054 * 0.2f64.sqrt(), epsilon = 1e-8);
    }
}
