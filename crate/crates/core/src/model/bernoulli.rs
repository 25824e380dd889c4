//! Logistic regression with two crossed or nested random intercepts.

use nalgebra::{DMatrix, DVector};

use super::likelihood::{EtaHessian, IndexSets, Likelihood};
use super::prior::{HyperParam, LatentBlock, LatentPrior};
use super::{design::SparseDesign, ElgmModel, PriorSettings};
use crate::error::{Error, Result};
use crate::math::{expit, log1p_exp};
use crate::par;

#[derive(Debug, Clone)]
pub struct BernoulliLikelihood {
    y: Vec<f64>,
}

impl BernoulliLikelihood {
    pub fn new(y: Vec<f64>) -> Self {
        Self { y }
    }
}

impl Likelihood for BernoulliLikelihood {
    fn name(&self) -> &'static str {
        "bernoulli"
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn n_predictors(&self) -> usize {
        self.y.len()
    }

    fn index_sets(&self) -> IndexSets {
        IndexSets::Singletons(self.y.len())
    }

    fn log_lik(&self, eta: &DVector<f64>, _: &[f64]) -> f64 {
        par::sum_indices(self.y.len(), |i| self.y[i] * eta[i] - log1p_exp(eta[i]))
    }

    fn grad(&self, eta: &DVector<f64>, _: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.y.len(), |i, _| self.y[i] - expit(eta[i]))
    }

    fn neg_hessian(&self, eta: &DVector<f64>, _: &[f64]) -> EtaHessian {
        EtaHessian::Diagonal(eta.map(|e| {
            let p = expit(e);
            p * (1.0 - p)
        }))
    }
}

/// Binary responses with covariates and two grouping factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmmData {
    pub y: Vec<f64>,
    /// Covariates, one row per observation; an intercept is added.
    pub x: DMatrix<f64>,
    pub group1: Vec<usize>,
    pub group2: Vec<usize>,
    pub d1: usize,
    pub d2: usize,
}

impl GlmmData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.x.nrows() != n || self.group1.len() != n || self.group2.len() != n {
            return Err(Error::Dimension(format!(
                "glmm data has {n} responses, {} covariate rows and {}/{} group labels",
                self.x.nrows(),
                self.group1.len(),
                self.group2.len()
            )));
        }
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::InvalidModel("grouping factors need at least one level".into()));
        }
        if let Some(i) = self.y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidModel(format!("response {i} is {}, expected 0 or 1", self.y[i])));
        }
        if let Some(i) = (0..n).find(|&i| self.group1[i] >= self.d1 || self.group2[i] >= self.d2) {
            return Err(Error::InvalidModel(format!("group label out of range at row {i}")));
        }
        Ok(())
    }
}

/// `logit p_i = x_i^T beta + u1[g1_i] + u2[g2_i]`, `u_k ~ N(0, sigma_k^2)`,
/// `theta = (log sigma_1, log sigma_2)`.
///
/// Latent order is `(u1, u2, beta)` with `beta = (intercept, covariates...)`.
pub fn bernoulli_glmm(data: &GlmmData, settings: PriorSettings) -> Result<ElgmModel> {
    data.validate()?;
    let n = data.n();
    let p = data.x.ncols() + 1;
    let (d1, d2) = (data.d1, data.d2);
    let m = d1 + d2 + p;
    let mut triplets = Vec::with_capacity(n * (p + 2));
    for i in 0..n {
        triplets.push((i, data.group1[i], 1.0));
        triplets.push((i, d1 + data.group2[i], 1.0));
        triplets.push((i, d1 + d2, 1.0));
        for j in 1..p {
            triplets.push((i, d1 + d2 + j, data.x[(i, j - 1)]));
        }
    }
    let prior = LatentPrior::new(vec![
        LatentBlock::Iid { name: "u1".into(), size: d1, hyper: 0 },
        LatentBlock::Iid { name: "u2".into(), size: d2, hyper: 1 },
        LatentBlock::Fixed { name: "beta".into(), variances: vec![settings.beta_variance; p] },
    ])?;
    ElgmModel::new(
        Box::new(BernoulliLikelihood::new(data.y.clone())),
        SparseDesign::from_triplets(n, m, &triplets)?,
        prior,
        vec![HyperParam::log_sd("sigma1"), HyperParam::log_sd("sigma2")],
    )
}
