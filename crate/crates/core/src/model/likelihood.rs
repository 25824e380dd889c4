//! Observation models: log-likelihoods of the additive predictors.

use std::borrow::Cow;
use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use super::design::SparseDesign;

/// Which additive predictors each observation depends on.
#[derive(Debug, Clone, PartialEq)]
pub enum IndexSets {
    /// Observation `i` depends on predictor `i` only.
    Singletons(usize),
    /// Observation `i` depends on predictors `starts[i]..n`.
    Suffixes { starts: Vec<usize>, n: usize },
    Explicit(Vec<Vec<usize>>),
}

impl IndexSets {
    pub fn len(&self) -> usize {
        match self {
            IndexSets::Singletons(n) => *n,
            IndexSets::Suffixes { starts, .. } => starts.len(),
            IndexSets::Explicit(sets) => sets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Cow<'_, [usize]> {
        match self {
            IndexSets::Singletons(_) => Cow::Owned(vec![i]),
            IndexSets::Suffixes { starts, n } => Cow::Owned((starts[i]..*n).collect()),
            IndexSets::Explicit(sets) => Cow::Borrowed(&sets[i]),
        }
    }

    /// Whether some set contains both `k` and `l`.
    pub fn shares(&self, k: usize, l: usize) -> bool {
        match self {
            IndexSets::Singletons(_) => k == l,
            IndexSets::Suffixes { starts, .. } => starts.iter().any(|&s| s <= k.min(l)),
            IndexSets::Explicit(sets) => sets.iter().any(|s| s.contains(&k) && s.contains(&l)),
        }
    }

    /// Marks every predictor that appears in some set.
    pub fn coverage(&self, n_predictors: usize) -> Vec<bool> {
        let mut seen = vec![false; n_predictors];
        match self {
            IndexSets::Singletons(n) => seen.iter_mut().take(*n).for_each(|s| *s = true),
            IndexSets::Suffixes { starts, n } => {
                if let Some(&first) = starts.iter().min() {
                    seen.iter_mut().take(*n).skip(first).for_each(|s| *s = true);
                }
            }
            IndexSets::Explicit(sets) => {
                for &t in sets.iter().flatten() {
                    if t < n_predictors {
                        seen[t] = true;
                    }
                }
            }
        }
        seen
    }
}

/// Negative Hessian of the log-likelihood with respect to the additive predictors.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaHessian {
    Diagonal(DVector<f64>),
    /// Sum of dense blocks, each acting on the listed predictors.
    Blocks(Vec<(Vec<usize>, DMatrix<f64>)>),
    Dense(DMatrix<f64>),
}

impl EtaHessian {
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            EtaHessian::Diagonal(d) => DMatrix::from_diagonal(d),
            EtaHessian::Blocks(blocks) => {
                let mut out = DMatrix::zeros(n, n);
                for (idx, b) in blocks {
                    for (p, &i) in idx.iter().enumerate() {
                        for (q, &j) in idx.iter().enumerate() {
                            out[(i, j)] += b[(p, q)];
                        }
                    }
                }
                out
            }
            EtaHessian::Dense(c) => c.clone(),
        }
    }

    /// `Z^T C Z`.
    pub fn project(&self, z: &SparseDesign) -> DMatrix<f64> {
        match self {
            EtaHessian::Diagonal(d) => z.weighted_gram(d),
            EtaHessian::Blocks(blocks) => {
                let mut out = DMatrix::zeros(z.ncols(), z.ncols());
                for (idx, b) in blocks {
                    z.block_gram(idx, b, &mut out);
                }
                out
            }
            EtaHessian::Dense(c) => z.dense_gram(c),
        }
    }
}

/// A likelihood `log p(y | eta, theta_1)`.
///
/// Implementations return `-inf` from [`Likelihood::log_lik`] outside the
/// parameter domain and explain why in [`Likelihood::domain_violation`].
pub trait Likelihood: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn n_obs(&self) -> usize;
    fn n_predictors(&self) -> usize;
    /// Number of likelihood hyperparameters.
    fn n_params(&self) -> usize {
        0
    }
    fn index_sets(&self) -> IndexSets;
    fn log_lik(&self, eta: &DVector<f64>, params: &[f64]) -> f64;
    fn grad(&self, eta: &DVector<f64>, params: &[f64]) -> DVector<f64>;
    fn neg_hessian(&self, eta: &DVector<f64>, params: &[f64]) -> EtaHessian;
    /// `Z^T C Z` computed directly, when cheaper than forming `C`.
    fn project_hessian(&self, _eta: &DVector<f64>, _params: &[f64], _z: &SparseDesign) -> Option<DMatrix<f64>> {
        None
    }
    fn domain_violation(&self, _eta: &DVector<f64>, _params: &[f64]) -> Option<String> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_sets_share_everything() {
        let sets = IndexSets::Suffixes { starts: vec![0, 1, 2], n: 3 };
        for k in 0..3 {
            for l in 0..3 {
                assert!(sets.shares(k, l));
            }
        }
        assert_eq!(sets.get(1).as_ref(), &[1, 2]);
        assert_eq!(sets.coverage(3), vec![true; 3]);
    }

    #[test]
    fn explicit_shared_cells() {
        let sets = IndexSets::Explicit(vec![vec![0, 2], vec![1, 2]]);
        assert!(sets.shares(0, 2));
        assert!(sets.shares(1, 2));
        assert!(!sets.shares(0, 1));
    }

    #[test]
    fn blocks_accumulate() {
        let h = EtaHessian::Blocks(vec![
            (vec![0, 2], DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0])),
            (vec![2], DMatrix::from_element(1, 1, 3.0)),
        ]);
        let d = h.to_dense(3);
        assert_eq!(d[(2, 2)], 5.0);
        assert_eq!(d[(0, 2)], 0.5);
        assert_eq!(d[(1, 1)], 0.0);
    }
}
