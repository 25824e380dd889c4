//! Poisson counts over regions that aggregate cell-level rates.

use nalgebra::{DMatrix, DVector};

use super::likelihood::{EtaHessian, IndexSets, Likelihood};
use super::prior::{HyperParam, LatentBlock, LatentPrior};
use super::{design::SparseDesign, ElgmModel, PriorSettings};
use crate::error::{Error, Result};
use crate::math::ln_factorial;
use crate::par;

/// `y_i ~ Poisson(sum_{t in J_i} P_it exp(eta_t))`.
#[derive(Debug, Clone)]
pub struct PoissonAggregateLikelihood {
    y: Vec<f64>,
    cells: Vec<Vec<usize>>,
    populations: Vec<Vec<f64>>,
    n_cells: usize,
    log_fact: Vec<f64>,
}

impl PoissonAggregateLikelihood {
    pub fn new(y: Vec<f64>, cells: Vec<Vec<usize>>, populations: Vec<Vec<f64>>, n_cells: usize) -> Result<Self> {
        if cells.len() != y.len() || populations.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} counts, {} cell lists, {} population lists",
                y.len(),
                cells.len(),
                populations.len()
            )));
        }
        for (i, (c, p)) in cells.iter().zip(&populations).enumerate() {
            if c.len() != p.len() || c.is_empty() {
                return Err(Error::InvalidModel(format!("region {i} has {} cells and {} populations", c.len(), p.len())));
            }
            if c.iter().any(|&t| t >= n_cells) {
                return Err(Error::InvalidModel(format!("region {i} refers to a cell beyond {n_cells}")));
            }
            if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidModel(format!("region {i} has a negative or non-finite population")));
            }
        }
        if let Some(i) = y.iter().position(|v| !(*v >= 0.0) || v.fract() != 0.0) {
            return Err(Error::InvalidModel(format!("count {i} is {}, expected a nonnegative integer", y[i])));
        }
        let log_fact = y.iter().map(|&v| ln_factorial(v)).collect();
        Ok(Self {
            y,
            cells,
            populations,
            n_cells,
            log_fact,
        })
    }

    /// Cell contributions `P_it exp(eta_t)` and their total.
    fn rates(&self, i: usize, eta: &DVector<f64>) -> (Vec<f64>, f64) {
        let a: Vec<f64> = self.cells[i]
            .iter()
            .zip(&self.populations[i])
            .map(|(&t, &p)| p * eta[t].exp())
            .collect();
        let mu = a.iter().sum();
        (a, mu)
    }
}

impl Likelihood for PoissonAggregateLikelihood {
    fn name(&self) -> &'static str {
        "poisson-aggregate"
    }

    fn n_obs(&self) -> usize {
        self.y.len()
    }

    fn n_predictors(&self) -> usize {
        self.n_cells
    }

    fn index_sets(&self) -> IndexSets {
        IndexSets::Explicit(self.cells.clone())
    }

    fn log_lik(&self, eta: &DVector<f64>, _: &[f64]) -> f64 {
        par::sum_indices(self.y.len(), |i| {
            let (_, mu) = self.rates(i, eta);
            if !(mu > 0.0) || !mu.is_finite() {
                return f64::NEG_INFINITY;
            }
            self.y[i] * mu.ln() - mu - self.log_fact[i]
        })
    }

    fn grad(&self, eta: &DVector<f64>, _: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_cells);
        for i in 0..self.y.len() {
            let (a, mu) = self.rates(i, eta);
            let ratio = self.y[i] / mu - 1.0;
            for (&t, at) in self.cells[i].iter().zip(&a) {
                g[t] += at * ratio;
            }
        }
        g
    }

    fn neg_hessian(&self, eta: &DVector<f64>, _: &[f64]) -> EtaHessian {
        let blocks = (0..self.y.len())
            .map(|i| {
                let (a, mu) = self.rates(i, eta);
                let y = self.y[i];
                let k = a.len();
                let block = DMatrix::from_fn(k, k, |s, u| {
                    let cross = y * a[s] * a[u] / (mu * mu);
                    if s == u {
                        a[s] * (1.0 - y / mu) + cross
                    } else {
                        cross
                    }
                });
                (self.cells[i].clone(), block)
            })
            .collect();
        EtaHessian::Blocks(blocks)
    }

    fn domain_violation(&self, eta: &DVector<f64>, _: &[f64]) -> Option<String> {
        (0..self.y.len()).find_map(|i| {
            let (_, mu) = self.rates(i, eta);
            (!(mu > 0.0) || !mu.is_finite()).then(|| format!("region {i} has rate {mu}"))
        })
    }
}

/// Region counts, the cells each region covers and the cell populations.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonAggregateData {
    pub y: Vec<f64>,
    pub cells: Vec<Vec<usize>>,
    pub populations: Vec<Vec<f64>>,
    pub n_cells: usize,
    /// Cell covariates, one row per cell.
    pub x_cells: DMatrix<f64>,
    pub intercept: bool,
}

/// `eta_t = x_t^T beta + u_t` with `u ~ N(0, sigma^2 I)`, `theta = (log sigma)`.
///
/// Latent order is `(u, beta)` with the intercept first in `beta` when present.
pub fn poisson_aggregate(data: &PoissonAggregateData, settings: PriorSettings) -> Result<ElgmModel> {
    let t = data.n_cells;
    if data.x_cells.nrows() != t {
        return Err(Error::Dimension(format!(
            "{} covariate rows for {t} cells",
            data.x_cells.nrows()
        )));
    }
    let lik = PoissonAggregateLikelihood::new(data.y.clone(), data.cells.clone(), data.populations.clone(), t)?;
    let offset = usize::from(data.intercept);
    let p = data.x_cells.ncols() + offset;
    let mut triplets = Vec::with_capacity(t * (p + 1));
    for c in 0..t {
        triplets.push((c, c, 1.0));
        if data.intercept {
            triplets.push((c, t, 1.0));
        }
        for j in 0..data.x_cells.ncols() {
            triplets.push((c, t + offset + j, data.x_cells[(c, j)]));
        }
    }
    let mut blocks = vec![LatentBlock::Iid { name: "u".into(), size: t, hyper: 0 }];
    if p > 0 {
        blocks.push(LatentBlock::Fixed { name: "beta".into(), variances: vec![settings.beta_variance; p] });
    }
    ElgmModel::new(
        Box::new(lik),
        SparseDesign::from_triplets(t, t + p, &triplets)?,
        LatentPrior::new(blocks)?,
        vec![HyperParam::log_sd("sigma")],
    )
}
