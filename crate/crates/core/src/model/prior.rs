//! Latent Gaussian priors, hyperparameter priors and their transforms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::LN_2PI;

/// Map from the unconstrained scale to the natural one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    /// `natural = exp(theta)`.
    Log,
}

impl Transform {
    pub fn constrain(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Log => theta.exp(),
        }
    }

    pub fn unconstrain(self, natural: f64) -> f64 {
        match self {
            Transform::Identity => natural,
            Transform::Log => natural.ln(),
        }
    }

    /// `log |d natural / d theta|`.
    pub fn log_jacobian(self, theta: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::Log => theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperPrior {
    /// Normal density on the unconstrained scale.
    Normal { mean: f64, sd: f64 },
    /// Exponential density on the natural scale; the Jacobian is added.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParam {
    pub name: String,
    pub transform: Transform,
    pub prior: HyperPrior,
}

impl HyperParam {
    /// A standard deviation on the log scale, with `P(sd > 1) = 1/2`.
    pub fn log_sd(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            transform: Transform::Log,
            prior: HyperPrior::Exponential {
                rate: std::f64::consts::LN_2,
            },
        }
    }

    /// Log prior density of the unconstrained value, including any Jacobian.
    pub fn log_density(&self, theta: f64) -> f64 {
        match self.prior {
            HyperPrior::Normal { mean, sd } => {
                let z = (theta - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
            }
            HyperPrior::Exponential { rate } => {
                let x = self.transform.constrain(theta);
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x + self.transform.log_jacobian(theta)
                }
            }
        }
    }
}

/// A block of the latent vector with a diagonal Gaussian prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentBlock {
    /// Independent `N(0, exp(theta_h)^2)` entries, where `h` indexes the full hyperparameter vector.
    Iid { name: String, size: usize, hyper: usize },
    /// Known variances.
    Fixed { name: String, variances: Vec<f64> },
}

impl LatentBlock {
    pub fn size(&self) -> usize {
        match self {
            LatentBlock::Iid { size, .. } => *size,
            LatentBlock::Fixed { variances, .. } => variances.len(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            LatentBlock::Iid { name, .. } | LatentBlock::Fixed { name, .. } => name,
        }
    }
}

/// Block-diagonal prior precision `Q(theta_2)` on `W = (U, beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPrior {
    blocks: Vec<LatentBlock>,
}

impl LatentPrior {
    pub fn new(blocks: Vec<LatentBlock>) -> Result<Self> {
        for b in &blocks {
            if let LatentBlock::Fixed { name, variances } = b {
                if let Some(v) = variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidModel(format!("block {name} has variance {v}")));
                }
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[LatentBlock] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(LatentBlock::size).sum()
    }

    /// Largest hyperparameter index referenced, plus one.
    pub fn hyper_span(&self) -> usize {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                LatentBlock::Iid { hyper, .. } => Some(hyper + 1),
                LatentBlock::Fixed { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Diagonal of `Q(theta_2)`.
    pub fn precision_diag(&self, theta: &[f64]) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for b in &self.blocks {
            match b {
                LatentBlock::Iid { size, hyper, .. } => {
                    let prec = (-2.0 * theta[*hyper]).exp();
                    out.extend(std::iter::repeat_n(prec, *size));
                }
                LatentBlock::Fixed { variances, .. } => out.extend(variances.iter().map(|v| 1.0 / v)),
            }
        }
        DVector::from_vec(out)
    }

    pub fn precision(&self, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.precision_diag(theta))
    }

    /// `log |Q(theta_2)|`.
    pub fn log_det(&self, theta: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| match b {
                LatentBlock::Iid { size, hyper, .. } => -2.0 * theta[*hyper] * *size as f64,
                LatentBlock::Fixed { variances, .. } => -variances.iter().map(|v| v.ln()).sum::<f64>(),
            })
            .sum()
    }

    /// Names of the latent coordinates, e.g. `u1[3]`.
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for b in &self.blocks {
            if b.size() == 1 {
                names.push(b.name().to_string());
            } else {
                names.extend((0..b.size()).map(|j| format!("{}[{j}]", b.name())));
            }
        }
        names
    }
}
