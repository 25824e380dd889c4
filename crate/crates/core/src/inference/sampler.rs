//! Posterior draws: a node by its weight, then the latent field from that
//! node's Gaussian; hyperparameters from the continuous grid density.
//!
//! Draws are generated in fixed-size chunks, each with its own random stream
//! derived from the seed, so the output does not depend on the thread count.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::hyper::HyperDensity;
use super::FitResult;
use crate::error::{Error, Result};
use crate::par;

/// Draws per random stream.
pub const SAMPLE_CHUNK: usize = 1024;
/// Offset separating hyperparameter streams from latent ones.
const HYPER_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub seed: u64,
    /// Latent draws.
    pub draws: Vec<DVector<f64>>,
    /// Grid node behind each latent draw.
    pub node_choice: Vec<usize>,
    /// Hyperparameter draws on the unconstrained scale, independent of the
    /// latent draws.
    pub theta: Vec<DVector<f64>>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Coordinate `c` of every latent draw.
    pub fn latent_column(&self, c: usize) -> Vec<f64> {
        self.draws.iter().map(|w| w[c]).collect()
    }

    /// Coordinate `j` of every hyperparameter draw.
    pub fn hyper_column(&self, j: usize) -> Vec<f64> {
        self.theta.iter().map(|t| t[j]).collect()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Index whose cumulative weight first exceeds `u` times the total.
fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = cumulative[cumulative.len() - 1];
    let target = u * total;
    let i = cumulative.partition_point(|&c| c <= target);
    if i < cumulative.len() {
        return i;
    }
    // u rounded up to the total: the last node with positive weight
    (1..cumulative.len())
        .rev()
        .find(|&j| cumulative[j] > cumulative[j - 1])
        .unwrap_or(0)
}

/// `b` joint draws from the fitted posterior.
pub fn sample_posterior(fit: &FitResult, b: usize, seed: u64) -> Result<SampleBatch> {
    if fit.nodes.len() != fit.lambda().len() || fit.nodes.is_empty() {
        return Err(Error::InvalidArgument("fit has no grid nodes".into()));
    }
    let mut cumulative = Vec::with_capacity(fit.lambda().len());
    let mut acc = 0.0;
    for &l in fit.lambda() {
        acc += l;
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    let hyper = HyperDensity::new(fit)?;
    let m = fit.latent_dim();

    let chunks = par::map_chunks(b, SAMPLE_CHUNK, |range| {
        let id = (range.start / SAMPLE_CHUNK) as u64;
        let mut rng = stream(seed, id);
        let mut hyper_rng = stream(seed, HYPER_STREAM + id);
        let mut draws = Vec::with_capacity(range.len());
        let mut nodes = Vec::with_capacity(range.len());
        let mut thetas = Vec::with_capacity(range.len());
        for _ in range {
            let j = pick(&cumulative, rng.random::<f64>());
            let node = &fit.nodes[j];
            let eps = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            draws.push(&node.mode + node.hessian.solve_upper(&eps));
            nodes.push(j);
            thetas.push(hyper.sample(&mut hyper_rng));
        }
        (draws, nodes, thetas)
    });

    let mut batch = SampleBatch {
        seed,
        draws: Vec::with_capacity(b),
        node_choice: Vec::with_capacity(b),
        theta: Vec::with_capacity(b),
    };
    for (d, n, t) in chunks {
        batch.draws.extend(d);
        batch.node_choice.extend(n);
        batch.theta.extend(t);
    }
    Ok(batch)
}
