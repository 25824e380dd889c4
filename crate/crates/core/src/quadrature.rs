//! Gauss-Hermite rules and their adaptation to a mode and curvature.
//!
//! Nodes follow the probabilists' convention (kernel `exp(-z^2/2)`), and the
//! stored weights are divided by the standard normal density at each node, so
//! that `sum_j w_j f(z_j)` approximates the unweighted integral `∫ f(z) dz`
//! and is exact whenever `f = p * phi` with `deg p <= 2k - 1`.

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, LN_2PI};

/// Largest supported univariate order.
pub const MAX_ORDER: usize = 199;
/// Largest supported product grid.
pub const MAX_GRID_POINTS: usize = 1_000_000;

/// A univariate Gauss-Hermite rule.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    density_weights: Vec<f64>,
}

impl UnivariateRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Ascending abscissae, symmetric about zero.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for unweighted integrals of standard-normal-kernel integrands.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights against the standard normal density, `w_j * phi(z_j)`; they sum to one.
    pub fn density_weights(&self) -> &[f64] {
        &self.density_weights
    }
}

/// Builds the `k`-point rule from the symmetric tridiagonal Jacobi matrix of the
/// probabilists' Hermite recurrence.
///
/// Eigenvalues of the Jacobi matrix give the nodes, which are then polished by
/// Newton steps on the orthonormal recurrence and symmetrised. Weights come
/// from the Christoffel function `1 / sum_i p_i(z)^2` of the orthonormal
/// polynomials, which is the closed form of the squared first eigenvector
/// components and keeps full relative accuracy in the tails.
pub fn gauss_hermite_rule(k: usize) -> Result<UnivariateRule> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::InvalidOrder { k, max: MAX_ORDER });
    }
    let mut jacobi = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        let b = (i as f64).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    for z in nodes.iter_mut() {
        for _ in 0..3 {
            let (ratio, _) = hermite_recurrence(*z, k);
            if !ratio.is_finite() {
                break;
            }
            // p_k / p_k' = p_k / (sqrt(k) p_{k-1})
            let step = ratio / (k as f64).sqrt();
            *z -= step;
            if step.abs() <= 1e-17 * z.abs().max(1.0) {
                break;
            }
        }
    }

    for j in 0..k / 2 {
        let a = 0.5 * (nodes[k - 1 - j] - nodes[j]);
        nodes[j] = -a;
        nodes[k - 1 - j] = a;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }

    // log of the density weight: -log sum_i p_i(z)^2
    let mut log_dw: Vec<f64> = nodes.iter().map(|&z| -hermite_recurrence(z, k).1).collect();
    for j in 0..k / 2 {
        let avg = 0.5 * (log_dw[j] + log_dw[k - 1 - j]);
        log_dw[j] = avg;
        log_dw[k - 1 - j] = avg;
    }
    let log_total = log_sum_exp(&log_dw);
    let density_weights: Vec<f64> = log_dw.iter().map(|&l| (l - log_total).exp()).collect();
    let weights: Vec<f64> = log_dw
        .iter()
        .zip(&nodes)
        .map(|(&l, &z)| (l - log_total + 0.5 * z * z + 0.5 * LN_2PI).exp())
        .collect();

    Ok(UnivariateRule {
        nodes,
        weights,
        density_weights,
    })
}

/// Runs the orthonormal probabilists' Hermite recurrence up to degree `k`.
///
/// Returns `p_k(z) / p_{k-1}(z)` and `log sum_{i<k} p_i(z)^2`, rescaling as it
/// goes so that neither overflows.
fn hermite_recurrence(z: f64, k: usize) -> (f64, f64) {
    let mut prev = 0.0_f64;
    let mut cur = 1.0_f64;
    let mut sum = 0.0_f64;
    let mut log_scale = 0.0_f64;
    for n in 0..k {
        sum += cur * cur;
        let next = (z * cur - (n as f64).sqrt() * prev) / ((n + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        let mag = cur.abs().max(prev.abs());
        if mag > 1e100 {
            prev /= mag;
            cur /= mag;
            sum /= mag * mag;
            log_scale += mag.ln();
        }
    }
    (cur / prev, sum.ln() + 2.0 * log_scale)
}

/// Tensor-product extension of a univariate rule to `s` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductRule {
    dim: usize,
    base: UnivariateRule,
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl ProductRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn base(&self) -> &UnivariateRule {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node indices of point `p`; the first coordinate varies slowest.
    pub fn multi_index(&self, p: usize) -> Vec<usize> {
        multi_index(p, self.dim, self.order())
    }
}

pub(crate) fn multi_index(mut p: usize, dim: usize, k: usize) -> Vec<usize> {
    let mut idx = vec![0; dim];
    for slot in idx.iter_mut().rev() {
        *slot = p % k;
        p /= k;
    }
    idx
}

/// All `k^s` coordinate combinations of the `k`-point rule, in lexicographic order.
pub fn product_rule(s: usize, k: usize) -> Result<ProductRule> {
    let base = gauss_hermite_rule(k)?;
    let count = u32::try_from(s)
        .ok()
        .and_then(|e| k.checked_pow(e))
        .filter(|&c| c <= MAX_GRID_POINTS)
        .ok_or(Error::GridCapacity {
            s,
            k,
            cap: MAX_GRID_POINTS,
        })?;
    let mut points = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for p in 0..count {
        let idx = multi_index(p, s, k);
        points.push(DVector::from_iterator(s, idx.iter().map(|&j| base.nodes[j])));
        weights.push(idx.iter().map(|&j| base.weights[j]).product());
    }
    Ok(ProductRule {
        dim: s,
        base,
        points,
        weights,
    })
}

/// A product rule mapped through `theta = L z + center`.
#[derive(Debug, Clone)]
pub struct AdaptedPoints {
    pub points: Vec<DVector<f64>>,
    /// `|L| * w(z)` for each point.
    pub weights: Vec<f64>,
    /// `log |L|`.
    pub log_det: f64,
}

fn check_lower_factor(center: &DVector<f64>, cholesky: &DMatrix<f64>, dim: usize) -> Result<f64> {
    if center.len() != dim || cholesky.nrows() != dim || cholesky.ncols() != dim {
        return Err(Error::Dimension(format!(
            "rule has dimension {dim}, center {} and factor {}x{}",
            center.len(),
            cholesky.nrows(),
            cholesky.ncols()
        )));
    }
    let mut log_det = 0.0;
    for i in 0..dim {
        let d = cholesky[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Factorization { index: i, value: d });
        }
        log_det += d.ln();
    }
    Ok(log_det)
}

/// Moves the rule to `center` and scales it by the lower-triangular `cholesky`.
pub fn adapt(rule: &ProductRule, center: &DVector<f64>, cholesky: &DMatrix<f64>) -> Result<AdaptedPoints> {
    let log_det = check_lower_factor(center, cholesky, rule.dim())?;
    let lower = cholesky.lower_triangle();
    let det = log_det.exp();
    let points = rule.points().iter().map(|z| &lower * z + center).collect();
    let weights = rule.weights().iter().map(|w| det * w).collect();
    Ok(AdaptedPoints {
        points,
        weights,
        log_det,
    })
}

/// Normalised mixture weights `lambda ∝ exp(log_value) * w * |L|`.
///
/// Nodes whose log value is `-inf` receive weight zero.
pub fn normalize_lambda(log_values: &[f64], raw_weights: &[f64], log_det_cholesky: f64) -> Result<Vec<f64>> {
    if log_values.len() != raw_weights.len() {
        return Err(Error::Dimension(format!(
            "{} log values for {} weights",
            log_values.len(),
            raw_weights.len()
        )));
    }
    for (i, &lv) in log_values.iter().enumerate() {
        if lv.is_nan() || lv == f64::INFINITY {
            return Err(Error::NonFiniteEvaluation {
                point: vec![i as f64],
                value: lv,
            });
        }
    }
    // |L| is common to every node and cancels; shifting by the largest log
    // value first keeps the result independent of any common offset.
    let _ = log_det_cholesky;
    let top = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::DegeneratePosterior);
    }
    let terms: Vec<f64> = log_values
        .iter()
        .zip(raw_weights)
        .map(|(&lv, &w)| (lv - top) + w.ln())
        .collect();
    let total = log_sum_exp(&terms);
    Ok(terms.iter().map(|&t| (t - total).exp()).collect())
}

/// Quadrature grid adapted to the hyperparameter posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedGrid {
    pub center: DVector<f64>,
    /// Lower-triangular `L` with `L L^T` equal to the inverse curvature.
    pub cholesky: DMatrix<f64>,
    pub order: usize,
    /// Standardised points `z`, lexicographic.
    pub std_points: Vec<DVector<f64>>,
    /// Transformed points `L z + center`.
    pub nodes: Vec<DVector<f64>>,
    /// Product weights `w(z)` before scaling by `|L|`.
    pub raw_weights: Vec<f64>,
    pub log_det_cholesky: f64,
    /// Unnormalised log posterior at each node.
    #[serde(with = "neg_inf_as_null")]
    pub log_values: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl AdaptedGrid {
    /// Adapts `rule`; `log_value` is evaluated at every transformed node.
    pub fn build<F>(rule: &ProductRule, center: DVector<f64>, cholesky: DMatrix<f64>, log_value: F) -> Result<Self>
    where
        F: FnOnce(&[DVector<f64>]) -> Result<Vec<f64>>,
    {
        let adapted = adapt(rule, &center, &cholesky)?;
        let log_values = log_value(&adapted.points)?;
        Self::from_parts(rule, center, cholesky, adapted.points, log_values)
    }

    pub(crate) fn from_parts(
        rule: &ProductRule,
        center: DVector<f64>,
        cholesky: DMatrix<f64>,
        nodes: Vec<DVector<f64>>,
        log_values: Vec<f64>,
    ) -> Result<Self> {
        let log_det_cholesky = check_lower_factor(&center, &cholesky, rule.dim())?;
        let lambda = normalize_lambda(&log_values, rule.weights(), log_det_cholesky)?;
        Ok(Self {
            center,
            cholesky: cholesky.lower_triangle(),
            order: rule.order(),
            std_points: rule.points().to_vec(),
            nodes,
            raw_weights: rule.weights().to_vec(),
            log_det_cholesky,
            log_values,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `log( |L| sum_z exp(log_value(z)) w(z) )`.
    pub fn log_normalizer(&self) -> f64 {
        let terms: Vec<f64> = self
            .log_values
            .iter()
            .zip(&self.raw_weights)
            .map(|(lv, w)| lv + w.ln())
            .collect();
        log_sum_exp(&terms) + self.log_det_cholesky
    }

    /// Index of the node at the center (odd orders only).
    pub fn center_index(&self) -> Option<usize> {
        (self.order % 2 == 1).then(|| (self.len() - 1) / 2)
    }
}

/// JSON has no infinities; zero-weight nodes are written as `null`.
mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Option<f64>> = values.iter().map(|x| x.is_finite().then_some(*x)).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}
