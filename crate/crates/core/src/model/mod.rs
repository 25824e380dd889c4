//! Extended latent Gaussian models.
//!
//! Observations `y_i` depend on subsets `J_i` of the additive predictors
//! `eta = Z w`, where `w = (U, beta)` has a Gaussian prior with precision
//! `Q(theta_2)` and the likelihood may carry its own parameters `theta_1`.

pub mod bernoulli;
pub mod cox;
pub mod design;
pub mod gaussian;
pub mod likelihood;
pub mod poisson;
pub mod prior;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::LN_2PI;
use crate::numkernels::Storage;

pub use bernoulli::{bernoulli_glmm, BernoulliLikelihood, GlmmData};
pub use cox::{cox_ph_partial, CoxData, CoxPartialLikelihood};
pub use design::SparseDesign;
pub use gaussian::{conjugate_gaussian, gaussian_scale, GaussianLikelihood};
pub use likelihood::{EtaHessian, IndexSets, Likelihood};
pub use poisson::{poisson_aggregate, PoissonAggregateData, PoissonAggregateLikelihood};
pub use prior::{HyperParam, HyperPrior, LatentBlock, LatentPrior, Transform};

/// Prior settings shared by the built-in models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSettings {
    /// Prior variance of each regression coefficient.
    pub beta_variance: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self { beta_variance: 1000.0 }
    }
}

/// What the inference routines need from a model: the log joint density of
/// `(w, theta, y)` and its first two derivatives in `w`.
pub trait LatentModel: Send + Sync {
    fn latent_dim(&self) -> usize;
    fn hyper_dim(&self) -> usize;
    /// `log pi(w, theta, y)`; `-inf` outside the likelihood's domain.
    fn log_joint(&self, w: &DVector<f64>, theta: &DVector<f64>) -> f64;
    /// Gradient of the log joint in `w`.
    fn grad_w(&self, w: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;
    /// Negative Hessian of the log joint in `w`.
    fn hessian_w(&self, w: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;

    fn storage(&self) -> Storage {
        Storage::Dense
    }

    fn latent_names(&self) -> Vec<String> {
        (0..self.latent_dim()).map(|i| format!("w[{i}]")).collect()
    }

    fn hyper_names(&self) -> Vec<String> {
        (0..self.hyper_dim()).map(|j| format!("theta[{j}]")).collect()
    }

    /// Map from each unconstrained hyperparameter to its natural scale.
    fn hyper_transforms(&self) -> Vec<Transform> {
        vec![Transform::Identity; self.hyper_dim()]
    }

    /// Hyperparameters on their natural scale.
    fn to_natural(&self, theta: &DVector<f64>) -> DVector<f64> {
        let t = self.hyper_transforms();
        DVector::from_fn(theta.len(), |j, _| t[j].constrain(theta[j]))
    }
}

/// Structural nonzero pattern of a symmetric matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    dim: usize,
    mask: Vec<bool>,
}

impl Pattern {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            mask: vec![false; dim * dim],
        }
    }

    pub fn of_matrix(a: &DMatrix<f64>) -> Self {
        let dim = a.nrows();
        let mut p = Self::empty(dim);
        for i in 0..dim {
            for j in 0..dim {
                if a[(i, j)] != 0.0 {
                    p.mask[i * dim + j] = true;
                }
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize) {
        self.mask[i * self.dim + j] = true;
        self.mask[j * self.dim + i] = true;
    }

    pub fn nnz(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn mark_clique(&mut self, support: &[usize]) {
        for &a in support {
            for &b in support {
                self.mask[a * self.dim + b] = true;
            }
        }
    }

    /// Whether every nonzero of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &Pattern) -> bool {
        self.dim == other.dim && self.mask.iter().zip(&other.mask).all(|(a, b)| !a || *b)
    }
}

/// A latent vector with its cached predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    w: DVector<f64>,
    eta: DVector<f64>,
}

impl LatentState {
    pub fn new(design: &SparseDesign, w: DVector<f64>) -> Self {
        let eta = design.mul_vec(&w);
        Self { w, eta }
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn set_w(&mut self, design: &SparseDesign, w: DVector<f64>) {
        self.eta = design.mul_vec(&w);
        self.w = w;
    }
}

/// A likelihood, design, latent prior and hyperparameter priors.
#[derive(Debug)]
pub struct ElgmModel {
    likelihood: Box<dyn Likelihood>,
    design: SparseDesign,
    prior: LatentPrior,
    hypers: Vec<HyperParam>,
    pattern: Pattern,
    storage: Storage,
}

impl ElgmModel {
    /// Validates the pieces and predicts the Hessian sparsity pattern.
    ///
    /// Hyperparameters are ordered likelihood parameters first.
    pub fn new(
        likelihood: Box<dyn Likelihood>,
        design: SparseDesign,
        prior: LatentPrior,
        hypers: Vec<HyperParam>,
    ) -> Result<Self> {
        let n_pred = likelihood.n_predictors();
        if design.nrows() != n_pred {
            return Err(Error::Dimension(format!(
                "design has {} rows but the likelihood uses {n_pred} predictors",
                design.nrows()
            )));
        }
        if design.ncols() != prior.dim() {
            return Err(Error::Dimension(format!(
                "design has {} columns but the latent prior has dimension {}",
                design.ncols(),
                prior.dim()
            )));
        }
        let needed = likelihood.n_params().max(prior.hyper_span());
        if hypers.len() != needed {
            return Err(Error::InvalidModel(format!(
                "{} hyperparameters declared, model uses {needed}",
                hypers.len()
            )));
        }
        let sets = likelihood.index_sets();
        if sets.len() != likelihood.n_obs() {
            return Err(Error::InvalidModel(format!(
                "{} index sets for {} observations",
                sets.len(),
                likelihood.n_obs()
            )));
        }
        if let IndexSets::Explicit(list) = &sets {
            if let Some(bad) = list.iter().position(|s| s.is_empty() || s.iter().any(|&t| t >= n_pred)) {
                return Err(Error::InvalidModel(format!("index set {bad} is empty or out of range")));
            }
        }
        if let Some(t) = sets.coverage(n_pred).iter().position(|c| !c) {
            return Err(Error::InvalidModel(format!("predictor {t} is used by no observation")));
        }
        let pattern = predicted_pattern(&sets, &design);
        let storage = Storage::for_fill(pattern.nnz(), pattern.dim());
        Ok(Self {
            likelihood,
            design,
            prior,
            hypers,
            pattern,
            storage,
        })
    }

    pub fn kind(&self) -> &'static str {
        self.likelihood.name()
    }

    pub fn likelihood(&self) -> &dyn Likelihood {
        self.likelihood.as_ref()
    }

    pub fn design(&self) -> &SparseDesign {
        &self.design
    }

    pub fn prior(&self) -> &LatentPrior {
        &self.prior
    }

    pub fn hypers(&self) -> &[HyperParam] {
        &self.hypers
    }

    pub fn n_obs(&self) -> usize {
        self.likelihood.n_obs()
    }

    /// Additive predictor count.
    pub fn n_predictors(&self) -> usize {
        self.likelihood.n_predictors()
    }

    /// Pattern of `Q + Z^T C Z` implied by the index sets.
    pub fn predicted_pattern(&self) -> &Pattern {
        &self.pattern
    }

    fn split<'a>(&self, theta: &'a DVector<f64>) -> &'a [f64] {
        &theta.as_slice()[..self.likelihood.n_params()]
    }

    /// `log pi(theta)` on the unconstrained scale.
    pub fn log_hyper_prior(&self, theta: &DVector<f64>) -> f64 {
        self.hypers.iter().zip(theta.iter()).map(|(h, &t)| h.log_density(t)).sum()
    }

    /// Log joint density, or a domain error.
    pub fn log_joint_checked(&self, w: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        let state = LatentState::new(&self.design, w.clone());
        let params = self.split(theta);
        if let Some(msg) = self.likelihood.domain_violation(state.eta(), params) {
            return Err(Error::Domain(msg));
        }
        let v = self.log_joint_at(&state, theta);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("log joint is {v}")))
        }
    }

    fn log_joint_at(&self, state: &LatentState, theta: &DVector<f64>) -> f64 {
        let params = self.split(theta);
        let ll = self.likelihood.log_lik(state.eta(), params);
        if ll.is_nan() || ll == f64::NEG_INFINITY {
            log::trace!("likelihood outside its domain at theta = {:?}", theta.as_slice());
            return f64::NEG_INFINITY;
        }
        let q = self.prior.precision_diag(theta.as_slice());
        let w = state.w();
        let quad: f64 = q.iter().zip(w.iter()).map(|(q, w)| q * w * w).sum();
        let m = w.len() as f64;
        ll - 0.5 * quad + 0.5 * self.prior.log_det(theta.as_slice()) - 0.5 * m * LN_2PI
            + self.log_hyper_prior(theta)
    }

    /// Negative Hessian of the log-likelihood in `w`, `Z^T C Z`.
    pub fn likelihood_hessian_w(&self, w: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.design.mul_vec(w);
        let params = self.split(theta);
        self.likelihood
            .project_hessian(&eta, params, &self.design)
            .unwrap_or_else(|| self.likelihood.neg_hessian(&eta, params).project(&self.design))
    }
}

fn predicted_pattern(sets: &IndexSets, design: &SparseDesign) -> Pattern {
    let m = design.ncols();
    let mut pattern = Pattern::empty(m);
    for j in 0..m {
        pattern.set(j, j);
    }
    let support = |rows: &mut dyn Iterator<Item = usize>| {
        let mut s: Vec<usize> = rows.flat_map(|t| design.row(t).0.iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    match sets {
        IndexSets::Singletons(n) => {
            for t in 0..*n {
                pattern.mark_clique(design.row(t).0);
            }
        }
        IndexSets::Suffixes { starts, n } => {
            // every suffix is contained in the longest one
            if let Some(&first) = starts.iter().min() {
                pattern.mark_clique(&support(&mut (first..*n)));
            }
        }
        IndexSets::Explicit(list) => {
            for set in list {
                pattern.mark_clique(&support(&mut set.iter().copied()));
            }
        }
    }
    pattern
}

impl LatentModel for ElgmModel {
    fn latent_dim(&self) -> usize {
        self.design.ncols()
    }

    fn hyper_dim(&self) -> usize {
        self.hypers.len()
    }

    fn log_joint(&self, w: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.log_joint_at(&LatentState::new(&self.design, w.clone()), theta)
    }

    fn grad_w(&self, w: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        let eta = self.design.mul_vec(w);
        let g = self.likelihood.grad(&eta, self.split(theta));
        let q = self.prior.precision_diag(theta.as_slice());
        self.design.tr_mul_vec(&g) - q.component_mul(w)
    }

    fn hessian_w(&self, w: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.likelihood_hessian_w(w, theta);
        let q = self.prior.precision_diag(theta.as_slice());
        for (j, qj) in q.iter().enumerate() {
            h[(j, j)] += qj;
        }
        h
    }

    fn storage(&self) -> Storage {
        self.storage
    }

    fn latent_names(&self) -> Vec<String> {
        self.prior.coordinate_names()
    }

    fn hyper_names(&self) -> Vec<String> {
        self.hypers.iter().map(|h| h.name.clone()).collect()
    }

    fn hyper_transforms(&self) -> Vec<Transform> {
        self.hypers.iter().map(|h| h.transform).collect()
    }
}
