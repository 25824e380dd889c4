//! Gaussian observations with known variance or a log-variance hyperparameter.

use nalgebra::DVector;

use super::likelihood::{EtaHessian, IndexSets, Likelihood};
use super::prior::{HyperParam, HyperPrior, LatentBlock, LatentPrior, Transform};
use super::{design::SparseDesign, ElgmModel};
use crate::error::Result;
use crate::math::LN_2PI;

/// `y_i ~ N(eta_i, v)`, with `v` fixed or `v = exp(theta_1[0])`.
#[derive(Debug, Clone)]
pub struct GaussianLikelihood {
    y: Vec<f64>,
    fixed_variance: Option<f64>,
}

impl GaussianLikelihood {
    pub fn with_variance(y: Vec<f64>, variance: f64) -> Self {
        Self {
            y,
            fixed_variance: Some(variance),
        }
    }

    pub fn with_log_variance(y: Vec<f64>) -> Self {
        Self { y, fixed_variance: None }
    }

    fn log_var(&self, params: &[f64]) -> f64 {
        self.fixed_variance.map_or_else(|| params[0], f64::ln)
    }
}

impl Likelihood for GaussianLikelihood {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn n_predictors(&self) -> usize {
        self.y.len()
    }

    fn n_params(&self) -> usize {
        usize::from(self.fixed_variance.is_none())
    }

    fn index_sets(&self) -> IndexSets {
        IndexSets::Singletons(self.y.len())
    }

    fn log_lik(&self, eta: &DVector<f64>, params: &[f64]) -> f64 {
        let lv = self.log_var(params);
        let prec = (-lv).exp();
        let n = self.y.len() as f64;
        let ss = crate::par::sum_indices(self.y.len(), |i| (self.y[i] - eta[i]).powi(2));
        -0.5 * prec * ss - 0.5 * n * (lv + LN_2PI)
    }

    fn grad(&self, eta: &DVector<f64>, params: &[f64]) -> DVector<f64> {
        let prec = (-self.log_var(params)).exp();
        DVector::from_fn(self.y.len(), |i, _| prec * (self.y[i] - eta[i]))
    }

    fn neg_hessian(&self, _eta: &DVector<f64>, params: &[f64]) -> EtaHessian {
        EtaHessian::Diagonal(DVector::from_element(self.y.len(), (-self.log_var(params)).exp()))
    }
}

/// `y_i ~ N(w, 1)`, `w ~ N(0, 1)`, no hyperparameters.
pub fn conjugate_gaussian(y: &[f64]) -> Result<ElgmModel> {
    let n = y.len();
    let triplets: Vec<_> = (0..n).map(|i| (i, 0, 1.0)).collect();
    ElgmModel::new(
        Box::new(GaussianLikelihood::with_variance(y.to_vec(), 1.0)),
        SparseDesign::from_triplets(n, 1, &triplets)?,
        LatentPrior::new(vec![LatentBlock::Fixed {
            name: "w".into(),
            variances: vec![1.0],
        }])?,
        Vec::new(),
    )
}

/// `y_i ~ N(0, exp(theta))` with `theta ~ N(0, 1)` and no latent field.
pub fn gaussian_scale(y: &[f64]) -> Result<ElgmModel> {
    let n = y.len();
    ElgmModel::new(
        Box::new(GaussianLikelihood::with_log_variance(y.to_vec())),
        SparseDesign::from_triplets(n, 0, &[])?,
        LatentPrior::new(Vec::new())?,
        vec![HyperParam {
            name: "variance".into(),
            transform: Transform::Log,
            prior: HyperPrior::Normal { mean: 0.0, sd: 1.0 },
        }],
    )
}
