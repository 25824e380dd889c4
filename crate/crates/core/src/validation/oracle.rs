//! Brute-force posterior by tensor trapezoid integration over `(w, theta)`.
//!
//! Only feasible for a handful of dimensions; used as an independent
//! reference for the grid approximation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{latent_marginals, FitResult};
use crate::model::LatentModel;
use crate::par;

pub const ORACLE_MAX_DIM: usize = 4;
pub const ORACLE_MAX_POINTS: usize = 10_000_000;
const ORACLE_CHUNK: usize = 1 << 14;

/// A coordinate of the joint `(w, theta)` space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coord {
    Latent(usize),
    Hyper(usize),
}

/// Equally spaced points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || points < 3 {
            return Err(Error::InvalidArgument(format!(
                "axis [{lo}, {hi}] with {points} points; need lo < hi and at least 3 points"
            )));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + self.step() * i as f64
    }

    /// Trapezoid weight of point `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.points {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

/// One axis per latent coordinate followed by one per hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    pub fn total_points(&self) -> Option<usize> {
        self.axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.points))
    }

    /// Axes spanning `mean ± half_width * sd` of each coordinate under `fit`,
    /// with `points[c]` points on axis `c`.
    pub fn around_fit(fit: &FitResult, half_width: f64, points: &[usize]) -> Result<Self> {
        let m = fit.latent_dim();
        let s = fit.hyper_dim();
        if points.len() != m + s {
            return Err(Error::Dimension(format!(
                "{} point counts for {} coordinates",
                points.len(),
                m + s
            )));
        }
        let mut axes = Vec::with_capacity(m + s);
        for (c, marg) in latent_marginals(fit).iter().enumerate() {
            let (mu, sd) = (marg.mean(), marg.variance().sqrt());
            axes.push(Axis::new(mu - half_width * sd, mu + half_width * sd, points[c])?);
        }
        let lambda = fit.lambda();
        for j in 0..s {
            let mu: f64 = fit.grid.nodes.iter().zip(lambda).map(|(n, l)| l * n[j]).sum();
            let spread: f64 = fit.grid.nodes.iter().zip(lambda).map(|(n, l)| l * (n[j] - mu).powi(2)).sum();
            let row = fit.grid.cholesky.row(j).norm();
            let sd = spread.sqrt().max(row);
            axes.push(Axis::new(mu - half_width * sd, mu + half_width * sd, points[m + j])?);
        }
        Ok(Self { axes })
    }
}

/// A normalised brute-force marginal over the requested coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDensity {
    pub coords: Vec<Coord>,
    pub axes: Vec<Axis>,
    /// Log of the normalised density at the tensor grid of `axes`, first
    /// coordinate slowest.
    pub log_density: Vec<f64>,
    /// Trapezoid estimate of `log ∫∫ pi(w, theta, y) dw dtheta`.
    pub log_normalizer: f64,
    pub nonfinite: usize,
}

/// One coordinate's oracle marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMarginal {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl OracleMarginal {
    /// Builds the distribution function with an end-corrected cumulative
    /// trapezoid: `F_i = T_i - h^2/12 (f'_i - f'_0)`.
    pub fn from_density(xs: Vec<f64>, density: Vec<f64>) -> Self {
        let n = xs.len();
        let h = xs[1] - xs[0];
        let deriv: Vec<f64> = (0..n)
            .map(|i| match i {
                0 => (-3.0 * density[0] + 4.0 * density[1] - density[2]) / (2.0 * h),
                i if i + 1 == n => (3.0 * density[i] - 4.0 * density[i - 1] + density[i - 2]) / (2.0 * h),
                i => (density[i + 1] - density[i - 1]) / (2.0 * h),
            })
            .collect();
        let mut cdf = Vec::with_capacity(n);
        let mut trap = 0.0;
        for i in 0..n {
            if i > 0 {
                trap += 0.5 * h * (density[i] + density[i - 1]);
            }
            cdf.push(trap - h * h / 12.0 * (deriv[i] - deriv[0]));
        }
        let total = cdf[n - 1];
        let mut running: f64 = 0.0;
        for c in &mut cdf {
            running = running.max((*c / total).clamp(0.0, 1.0));
            *c = running;
        }
        Self { xs, density, cdf }
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

    fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let h = self.xs[1] - self.xs[0];
        let n = self.xs.len();
        (0..n)
            .map(|i| {
                let w = if i == 0 || i + 1 == n { 0.5 * h } else { h };
                w * g(self.xs[i]) * self.density[i]
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.integrate(|x| (x - mu).powi(2))
    }
}

impl OracleDensity {
    /// Marginal of the `which`-th kept coordinate.
    pub fn marginal(&self, which: usize) -> Result<OracleMarginal> {
        let d = self.axes.len();
        if which >= d {
            return Err(Error::InvalidArgument(format!("oracle keeps {d} coordinates, asked for {which}")));
        }
        let target = self.axes[which];
        let mut out = vec![0.0; target.points];
        let counts: Vec<usize> = self.axes.iter().map(|a| a.points).collect();
        for (p, &lv) in self.log_density.iter().enumerate() {
            let idx = unravel(p, &counts);
            let w: f64 = (0..d).filter(|&c| c != which).map(|c| self.axes[c].weight(idx[c])).product();
            out[idx[which]] += w * lv.exp();
        }
        Ok(OracleMarginal::from_density(target.values(), out))
    }
}

fn unravel(mut p: usize, counts: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; counts.len()];
    for c in (0..counts.len()).rev() {
        idx[c] = p % counts[c];
        p /= counts[c];
    }
    idx
}

/// Integrates the joint density over every coordinate not in `keep`.
pub fn brute_force_posterior<M: LatentModel + ?Sized>(
    model: &M,
    keep: &[Coord],
    grid: &GridSpec,
) -> Result<OracleDensity> {
    let m = model.latent_dim();
    let s = model.hyper_dim();
    let dim = m + s;
    if dim > ORACLE_MAX_DIM {
        return Err(Error::OracleDimension { dim, cap: ORACLE_MAX_DIM });
    }
    if grid.axes.len() != dim {
        return Err(Error::Dimension(format!("{} axes for {dim} coordinates", grid.axes.len())));
    }
    let total = grid
        .total_points()
        .filter(|&n| n <= ORACLE_MAX_POINTS)
        .ok_or(Error::OracleGrid {
            points: grid.total_points().unwrap_or(usize::MAX),
            cap: ORACLE_MAX_POINTS,
        })?;
    if keep.is_empty() {
        return Err(Error::InvalidArgument("no coordinates to keep".into()));
    }
    let slots: Vec<usize> = keep
        .iter()
        .map(|c| match *c {
            Coord::Latent(i) if i < m => Ok(i),
            Coord::Hyper(j) if j < s => Ok(m + j),
            other => Err(Error::InvalidArgument(format!("{other:?} is outside the model"))),
        })
        .collect::<Result<_>>()?;
    if (1..slots.len()).any(|i| slots[..i].contains(&slots[i])) {
        return Err(Error::InvalidArgument("repeated coordinate".into()));
    }

    let counts: Vec<usize> = grid.axes.iter().map(|a| a.points).collect();
    let values: Vec<Vec<f64>> = par::map_chunks(total, ORACLE_CHUNK, |range| {
        let mut w = DVector::zeros(m);
        let mut theta = DVector::zeros(s);
        range
            .map(|p| {
                let idx = unravel(p, &counts);
                for c in 0..m {
                    w[c] = grid.axes[c].value(idx[c]);
                }
                for j in 0..s {
                    theta[j] = grid.axes[m + j].value(idx[m + j]);
                }
                model.log_joint(&w, &theta)
            })
            .collect()
    });
    let values: Vec<f64> = values.into_iter().flatten().collect();
    let nonfinite = values.iter().filter(|v| !v.is_finite()).count();
    if 2 * nonfinite > total {
        return Err(Error::OracleNonFinite { bad: nonfinite, total });
    }
    let top = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);

    let kept_counts: Vec<usize> = slots.iter().map(|&c| counts[c]).collect();
    let kept_len: usize = kept_counts.iter().product();
    let partials = par::map_chunks(total, ORACLE_CHUNK, |range| {
        let mut acc = vec![0.0; kept_len];
        let mut sum = 0.0;
        for p in range {
            let v = values[p];
            if !v.is_finite() {
                continue;
            }
            let idx = unravel(p, &counts);
            let mut w_drop = 1.0;
            let mut w_all = 1.0;
            for (c, &i) in idx.iter().enumerate() {
                let wc = grid.axes[c].weight(i);
                w_all *= wc;
                if !slots.contains(&c) {
                    w_drop *= wc;
                }
            }
            let e = (v - top).exp();
            sum += w_all * e;
            let flat = slots.iter().fold(0, |f, &c| f * counts[c] + idx[c]);
            acc[flat] += w_drop * e;
        }
        (acc, sum)
    });
    let mut density = vec![0.0; kept_len];
    let mut mass = 0.0;
    for (acc, sum) in partials {
        for (d, a) in density.iter_mut().zip(acc) {
            *d += a;
        }
        mass += sum;
    }
    if !(mass > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    Ok(OracleDensity {
        coords: keep.to_vec(),
        axes: slots.iter().map(|&c| grid.axes[c]).collect(),
        log_density: density.iter().map(|d| (d / mass).ln()).collect(),
        log_normalizer: mass.ln() + top,
        nonfinite,
    })
}
