//! A continuous hyperparameter density consistent with the quadrature grid.
//!
//! On the standardised scale `z = L^{-1} (theta - theta_hat)` the density is
//! `phi(z) P(z)`, where `P` is the tensor Lagrange polynomial through the grid
//! (degree `k - 1` per coordinate) interpolating `lambda_j / (w_j phi(z_j))`,
//! clipped at zero. Gauss-Hermite exactness makes its total mass, mean and
//! second moments equal the node-weighted sums; for `k = 1` it is the
//! Gaussian centred at the mode.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::FitResult;
use crate::error::{Error, Result};
use crate::math::std_normal_pdf;
use crate::quadrature::{gauss_hermite_rule, multi_index};

/// Evaluation points per coordinate for marginals.
const MARGINAL_POINTS: usize = 2001;
/// Evaluation points per coordinate when drawing conditionals.
const SAMPLING_POINTS: usize = 1001;

/// Values of the Lagrange basis through `nodes` at `x`.
fn lagrange(nodes: &[f64], x: f64, out: &mut [f64]) {
    for (b, slot) in out.iter_mut().enumerate() {
        let mut v = 1.0;
        for (c, &xc) in nodes.iter().enumerate() {
            if c != b {
                v *= (x - xc) / (nodes[b] - xc);
            }
        }
        *slot = v;
    }
}

/// Cumulative trapezoid of `density` over the equally spaced `xs`, unnormalised.
fn cumulative(xs: &[f64], density: &[f64]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(xs.len());
    let mut total = 0.0;
    acc.push(0.0);
    for i in 1..xs.len() {
        total += 0.5 * (density[i] + density[i - 1]) * (xs[i] - xs[i - 1]);
        acc.push(total);
    }
    acc
}

/// Point where the piecewise-linear cumulative curve reaches `target`.
fn invert(xs: &[f64], cum: &[f64], target: f64) -> f64 {
    let n = xs.len();
    let total = cum[n - 1];
    if !(total > 0.0) {
        return f64::NAN;
    }
    let target = target.clamp(0.0, total);
    let hi = cum.partition_point(|&c| c < target).clamp(1, n - 1);
    let lo = hi - 1;
    let span = cum[hi] - cum[lo];
    if span <= 0.0 {
        return xs[lo];
    }
    xs[lo] + (target - cum[lo]) / span * (xs[hi] - xs[lo])
}

/// The marginal density of one hyperparameter on a fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperMarginal {
    pub xs: Vec<f64>,
    /// Normalised density at `xs`.
    pub density: Vec<f64>,
    /// Distribution function at `xs`.
    pub cdf: Vec<f64>,
}

impl HyperMarginal {
    fn from_density(xs: Vec<f64>, raw: Vec<f64>) -> Result<Self> {
        let cum = cumulative(&xs, &raw);
        let total = *cum.last().unwrap_or(&0.0);
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        Ok(Self {
            density: raw.iter().map(|d| d / total).collect(),
            cdf: cum.iter().map(|c| c / total).collect(),
            xs,
        })
    }

    pub fn quantile(&self, p: f64) -> f64 {
        invert(&self.xs, &self.cdf, p)
    }

    /// Distribution function, linear between grid points.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let hi = self.xs.partition_point(|&v| v < x).clamp(1, n - 1);
        let lo = hi - 1;
        let t = (x - self.xs[lo]) / (self.xs[hi] - self.xs[lo]);
        self.cdf[lo] + t * (self.cdf[hi] - self.cdf[lo])
    }

    /// Trapezoid integral of `g` against the density.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.xs.iter().zip(&self.density).map(|(&x, &d)| g(x) * d).collect();
        *cumulative(&self.xs, &vals).last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone)]
pub struct HyperDensity {
    dim: usize,
    order: usize,
    center: DVector<f64>,
    cholesky: DMatrix<f64>,
    nodes: Vec<f64>,
    density_weights: Vec<f64>,
    /// `levels[t]` holds the interpolated values with coordinates after `t`
    /// integrated out, indexed by the first `t + 1` coordinates.
    levels: Vec<Vec<f64>>,
    half_width: f64,
    grid: Vec<f64>,
    grid_basis: Vec<Vec<f64>>,
    first_cum: Vec<f64>,
}

impl HyperDensity {
    pub fn new(fit: &FitResult) -> Result<Self> {
        let grid_nodes = &fit.grid;
        let dim = grid_nodes.dim();
        let k = grid_nodes.order;
        let rule = gauss_hermite_rule(k)?;
        let nodes = rule.nodes().to_vec();
        let density_weights = rule.density_weights().to_vec();
        let rho: Vec<f64> = (0..grid_nodes.len())
            .map(|p| {
                let d: f64 = multi_index(p, dim, k).iter().map(|&b| density_weights[b]).product();
                grid_nodes.lambda[p] / d
            })
            .collect();
        let mut levels = vec![rho];
        for _ in 1..dim {
            let next = levels.last().map(|t| contract_last(t, &density_weights)).unwrap_or_default();
            levels.push(next);
        }
        levels.reverse();

        let max_node = nodes.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let half_width = (max_node + 4.5).max(6.0);
        let grid = linspace(half_width, SAMPLING_POINTS);
        let grid_basis = grid
            .iter()
            .map(|&x| {
                let mut b = vec![0.0; k];
                lagrange(&nodes, x, &mut b);
                b
            })
            .collect::<Vec<_>>();
        let first_cum = if dim == 0 {
            Vec::new()
        } else {
            let dens: Vec<f64> = grid
                .iter()
                .zip(&grid_basis)
                .map(|(&x, b)| std_normal_pdf(x) * dot(&levels[0], b).max(0.0))
                .collect();
            cumulative(&grid, &dens)
        };
        Ok(Self {
            dim,
            order: k,
            center: grid_nodes.center.clone(),
            cholesky: grid_nodes.cholesky.clone(),
            nodes,
            density_weights,
            levels,
            half_width,
            grid,
            grid_basis,
            first_cum,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The interpolating polynomial at standardised point `z`, unclipped.
    pub fn polynomial(&self, z: &[f64]) -> f64 {
        let k = self.order;
        let Some(full) = self.levels.last() else {
            return 1.0;
        };
        let mut vals = full.clone();
        let mut basis = vec![0.0; k];
        for t in (0..self.dim).rev() {
            lagrange(&self.nodes, z[t], &mut basis);
            vals = contract_last(&vals, &basis);
        }
        vals[0]
    }

    /// Standardised density `phi(z) max(P(z), 0)`.
    pub fn std_density(&self, z: &[f64]) -> f64 {
        let phi: f64 = z.iter().map(|&v| std_normal_pdf(v)).product();
        phi * self.polynomial(z).max(0.0)
    }

    /// Marginal density of hyperparameter `j` on the unconstrained scale.
    pub fn marginal(&self, j: usize) -> Result<HyperMarginal> {
        self.marginal_with(j, true)
    }

    fn marginal_with(&self, j: usize, clip: bool) -> Result<HyperMarginal> {
        if j >= self.dim {
            return Err(Error::InvalidArgument(format!(
                "hyperparameter {j} requested, model has {}",
                self.dim
            )));
        }
        let s = self.dim;
        let row: Vec<f64> = (0..s).map(|c| self.cholesky[(j, c)]).collect();
        let scale = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: Vec<f64> = row.iter().map(|v| v / scale).collect();
        let complement = orthonormal_complement(&dir);

        // P restricted to the line is a polynomial of total degree s(k-1)
        // in the complement coordinates, so this rule is exact
        let inner_order = (s * (self.order - 1) + 1).div_ceil(2).max(1);
        let inner = gauss_hermite_rule(inner_order)?;
        let count = inner_order.pow((s - 1) as u32);
        let offsets: Vec<(Vec<f64>, f64)> = (0..count)
            .map(|p| {
                let idx = multi_index(p, s - 1, inner_order);
                let mut shift = vec![0.0; s];
                let mut w = 1.0;
                for (c, &b) in idx.iter().enumerate() {
                    w *= inner.density_weights()[b];
                    for (r, slot) in shift.iter_mut().enumerate() {
                        *slot += complement[c][r] * inner.nodes()[b];
                    }
                }
                (shift, w)
            })
            .collect();

        let us = linspace(self.half_width, MARGINAL_POINTS);
        let raw: Vec<f64> = us
            .iter()
            .map(|&u| {
                let r: f64 = offsets
                    .iter()
                    .map(|(shift, w)| {
                        let z: Vec<f64> = (0..s).map(|c| u * dir[c] + shift[c]).collect();
                        w * self.polynomial(&z)
                    })
                    .sum();
                std_normal_pdf(u) * if clip { r.max(0.0) } else { r }
            })
            .collect();
        let xs = us.iter().map(|&u| self.center[j] + scale * u).collect();
        HyperMarginal::from_density(xs, raw)
    }

    /// One draw of the hyperparameters on the unconstrained scale.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let s = self.dim;
        if s == 0 {
            return DVector::zeros(0);
        }
        let k = self.order;
        let mut z = DVector::zeros(s);
        let total = *self.first_cum.last().unwrap_or(&0.0);
        z[0] = finite_or_zero(invert(&self.grid, &self.first_cum, rng.random::<f64>() * total));
        let mut prefix = vec![0.0; k];
        lagrange(&self.nodes, z[0], &mut prefix);
        let mut basis = vec![0.0; k];
        for t in 1..s {
            let level = &self.levels[t];
            let coeffs: Vec<f64> = (0..k)
                .map(|b| prefix.iter().enumerate().map(|(p, pw)| pw * level[p * k + b]).sum())
                .collect();
            let dens: Vec<f64> = self
                .grid
                .iter()
                .zip(&self.grid_basis)
                .map(|(&x, lb)| std_normal_pdf(x) * dot(&coeffs, lb).max(0.0))
                .collect();
            let cum = cumulative(&self.grid, &dens);
            let total = *cum.last().unwrap_or(&0.0);
            z[t] = finite_or_zero(invert(&self.grid, &cum, rng.random::<f64>() * total));
            if t + 1 < s {
                lagrange(&self.nodes, z[t], &mut basis);
                prefix = prefix.iter().flat_map(|pw| basis.iter().map(move |b| pw * b)).collect();
            }
        }
        &self.cholesky * z + &self.center
    }

    pub fn density_weights(&self) -> &[f64] {
        &self.density_weights
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Contracts the last index of a tensor stored with that index fastest.
fn contract_last(values: &[f64], weights: &[f64]) -> Vec<f64> {
    values.chunks(weights.len()).map(|c| dot(c, weights)).collect()
}

fn linspace(half_width: f64, n: usize) -> Vec<f64> {
    let h = 2.0 * half_width / (n - 1) as f64;
    (0..n).map(|i| -half_width + h * i as f64).collect()
}

/// `s - 1` orthonormal vectors spanning the complement of the unit vector `dir`.
fn orthonormal_complement(dir: &[f64]) -> Vec<Vec<f64>> {
    let s = dir.len();
    let mut basis: Vec<Vec<f64>> = vec![dir.to_vec()];
    let mut axes: Vec<usize> = (0..s).collect();
    // start from the axes least aligned with dir
    axes.sort_by(|&a, &b| dir[a].abs().total_cmp(&dir[b].abs()));
    for e in axes {
        if basis.len() == s {
            break;
        }
        let mut v = vec![0.0; s];
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(&v, b);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    basis.split_off(1)
}
