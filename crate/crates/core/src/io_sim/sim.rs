//! Synthetic datasets with known parameters.
//!
//! Every simulator seeds a ChaCha20 generator with `seed` and draws in a
//! fixed, documented order, so a seed names the same table on every platform.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::table::{Column, ColumnTable};
use crate::error::{Error, Result};
use crate::math::expit;

/// A simulated table with the parameter values that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub generator: String,
    pub seed: u64,
    pub params: BTreeMap<String, Vec<f64>>,
    pub table: ColumnTable,
}

/// The part of [`SimTruth`] written next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub generator: String,
    pub seed: u64,
    pub params: BTreeMap<String, Vec<f64>>,
}

impl SimTruth {
    pub fn record(&self) -> TruthRecord {
        TruthRecord {
            generator: self.generator.clone(),
            seed: self.seed,
            params: self.params.clone(),
        }
    }
}

fn normal(rng: &mut ChaCha20Rng, sd: f64) -> f64 {
    sd * rng.sample::<f64, _>(StandardNormal)
}

fn check_sd(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be a nonnegative number, got {v}")));
    }
    Ok(())
}

fn labels(prefix: &str, codes: &[usize]) -> Vec<String> {
    codes.iter().map(|c| format!("{prefix}{c}")).collect()
}

/// Logistic GLMM with towns nested in states.
///
/// Draw order: `u1` (d1 values), `u2` (d2 values), then per row the town
/// (uniform on `0..d2`), covariates `x1..`, and the response. The state is
/// `town % d1`. `beta[0]` is the intercept.
pub fn simulate_bernoulli_glmm(
    seed: u64,
    n: usize,
    d1: usize,
    d2: usize,
    beta: &[f64],
    sigma1: f64,
    sigma2: f64,
) -> Result<SimTruth> {
    if n == 0 || d1 == 0 || d2 == 0 || beta.is_empty() {
        return Err(Error::InvalidArgument(
            "glmm simulation needs n, d1, d2 >= 1 and an intercept".into(),
        ));
    }
    check_sd("sigma1", sigma1)?;
    check_sd("sigma2", sigma2)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let u1: Vec<f64> = (0..d1).map(|_| normal(&mut rng, sigma1)).collect();
    let u2: Vec<f64> = (0..d2).map(|_| normal(&mut rng, sigma2)).collect();
    let p = beta.len();
    let mut y = Vec::with_capacity(n);
    let mut towns = Vec::with_capacity(n);
    let mut x = vec![Vec::with_capacity(n); p - 1];
    for _ in 0..n {
        let town = rng.random_range(0..d2);
        let state = town % d1;
        let mut eta = beta[0] + u1[state] + u2[town];
        for (j, col) in x.iter_mut().enumerate() {
            let v = normal(&mut rng, 1.0);
            eta += beta[j + 1] * v;
            col.push(v);
        }
        y.push(i64::from(rng.random::<f64>() < expit(eta)));
        towns.push(town);
    }
    let states: Vec<usize> = towns.iter().map(|t| t % d1).collect();
    let mut table = ColumnTable::new()
        .with("y", Column::Integer(y))?
        .with("state", Column::category(&labels("s", &states)))?
        .with("town", Column::category(&labels("t", &towns)))?;
    for (j, col) in x.into_iter().enumerate() {
        table.push(format!("x{}", j + 1), Column::Real(col))?;
    }
    let params = BTreeMap::from([
        ("beta".to_owned(), beta.to_vec()),
        ("sigma1".to_owned(), vec![sigma1]),
        ("sigma2".to_owned(), vec![sigma2]),
        ("u1".to_owned(), u1),
        ("u2".to_owned(), u2),
    ]);
    Ok(SimTruth {
        generator: "bernoulli-glmm".into(),
        seed,
        params,
        table,
    })
}

/// Proportional hazards with an exponential baseline: `T ~ Exp(exp(eta))`.
///
/// Censoring times are independent `Exp(rho)` with `rho = c / (1 - c)`, so a
/// fraction `c = censoring` of subjects at the baseline rate is censored.
/// With `d >= 1` a frailty `u ~ N(0, frailty_sd^2)` is shared within each of
/// `d` uniformly assigned groups. Draw order: frailties, then per row the
/// group, covariates `x1..xp`, event time and censoring time.
pub fn simulate_cox(
    seed: u64,
    n: usize,
    beta: &[f64],
    frailty_sd: f64,
    d: usize,
    censoring: f64,
) -> Result<SimTruth> {
    if n == 0 {
        return Err(Error::InvalidArgument("cox simulation needs n >= 1".into()));
    }
    check_sd("frailty_sd", frailty_sd)?;
    if !(0.0..1.0).contains(&censoring) {
        return Err(Error::InvalidArgument(format!("censoring must be in [0, 1), got {censoring}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..d).map(|_| normal(&mut rng, frailty_sd)).collect();
    let unit = Exp::new(1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rho = censoring / (1.0 - censoring);
    let p = beta.len();
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let mut x = vec![Vec::with_capacity(n); p];
    for _ in 0..n {
        let g = if d > 0 { rng.random_range(0..d) } else { 0 };
        let mut eta = if d > 0 { u[g] } else { 0.0 };
        for (j, col) in x.iter_mut().enumerate() {
            let v = normal(&mut rng, 1.0);
            eta += beta[j] * v;
            col.push(v);
        }
        let t: f64 = unit.sample(&mut rng) / eta.exp();
        let c: f64 = unit.sample(&mut rng);
        let c = if rho > 0.0 { c / rho } else { f64::INFINITY };
        time.push(t.min(c));
        event.push(i64::from(t <= c));
        groups.push(g);
    }
    let mut table = ColumnTable::new()
        .with("time", Column::Real(time))?
        .with("event", Column::Integer(event))?;
    for (j, col) in x.into_iter().enumerate() {
        table.push(format!("x{}", j + 1), Column::Real(col))?;
    }
    if d > 0 {
        let frailty = groups.iter().map(|&g| u[g]).collect();
        table.push("group", Column::category(&labels("g", &groups)))?;
        table.push("frailty", Column::Real(frailty))?;
    }
    let mut params = BTreeMap::from([
        ("beta".to_owned(), beta.to_vec()),
        ("frailty_sd".to_owned(), vec![frailty_sd]),
        ("censoring".to_owned(), vec![censoring]),
    ]);
    if d > 0 {
        params.insert("u".into(), u);
    }
    Ok(SimTruth {
        generator: "cox-ph".into(),
        seed,
        params,
        table,
    })
}

/// Regional counts aggregating cell-level Poisson rates.
///
/// Region `i` covers cells `(i * c + j) mod n_cells` for `j < c`; each cell
/// contributes `population * exp(eta_t)` with populations uniform on
/// `[5, 15)`. `eta_t = beta[0] + x_t^T beta[1..] + u_t` with
/// `u ~ N(0, sigma^2)`; an empty `beta` means no intercept. Draw order: cell
/// covariates, `u`, then per region the populations and the count. The table
/// is long: one row per (region, cell) pair with the region count repeated.
pub fn simulate_poisson_aggregate(
    seed: u64,
    regions: usize,
    cells_per_region: usize,
    n_cells: usize,
    beta: &[f64],
    sigma: f64,
) -> Result<SimTruth> {
    if regions == 0 || cells_per_region == 0 || cells_per_region > n_cells {
        return Err(Error::InvalidArgument(format!(
            "need regions >= 1 and 1 <= cells_per_region ({cells_per_region}) <= n_cells ({n_cells})"
        )));
    }
    check_sd("sigma", sigma)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n_cov = beta.len().saturating_sub(1);
    let x: Vec<Vec<f64>> = (0..n_cells).map(|_| (0..n_cov).map(|_| normal(&mut rng, 1.0)).collect()).collect();
    let u: Vec<f64> = (0..n_cells).map(|_| normal(&mut rng, sigma)).collect();
    let eta: Vec<f64> = (0..n_cells)
        .map(|t| {
            let fixed = beta.first().copied().unwrap_or(0.0)
                + x[t].iter().zip(beta.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>();
            fixed + u[t]
        })
        .collect();
    let (mut region_col, mut cell_col, mut pop_col, mut y_col) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut x_cols = vec![Vec::new(); n_cov];
    for i in 0..regions {
        let cells: Vec<usize> = (0..cells_per_region).map(|j| (i * cells_per_region + j) % n_cells).collect();
        let pops: Vec<f64> = cells.iter().map(|_| rng.random_range(5.0..15.0)).collect();
        let mu: f64 = cells.iter().zip(&pops).map(|(&t, p)| p * eta[t].exp()).sum();
        let count = Poisson::new(mu)
            .map_err(|e| Error::InvalidArgument(format!("region {i} rate {mu}: {e}")))?
            .sample(&mut rng) as i64;
        for (&t, &p) in cells.iter().zip(&pops) {
            region_col.push(i as i64);
            cell_col.push(t as i64);
            pop_col.push(p);
            y_col.push(count);
            for (j, col) in x_cols.iter_mut().enumerate() {
                col.push(x[t][j]);
            }
        }
    }
    let mut table = ColumnTable::new()
        .with("region", Column::Integer(region_col))?
        .with("cell", Column::Integer(cell_col))?
        .with("population", Column::Real(pop_col))?
        .with("y", Column::Integer(y_col))?;
    for (j, col) in x_cols.into_iter().enumerate() {
        table.push(format!("x{}", j + 1), Column::Real(col))?;
    }
    let params = BTreeMap::from([
        ("beta".to_owned(), beta.to_vec()),
        ("sigma".to_owned(), vec![sigma]),
        ("u".to_owned(), u),
    ]);
    Ok(SimTruth {
        generator: "poisson-aggregate".into(),
        seed,
        params,
        table,
    })
}

/// `y_i ~ N(0, sigma^2)`.
pub fn simulate_gaussian_scale(seed: u64, n: usize, sigma: f64) -> Result<SimTruth> {
    check_sd("sigma", sigma)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let y = (0..n).map(|_| normal(&mut rng, sigma)).collect();
    Ok(SimTruth {
        generator: "gaussian-scale".into(),
        seed,
        params: BTreeMap::from([("sigma".to_owned(), vec![sigma])]),
        table: ColumnTable::new().with("y", Column::Real(y))?,
    })
}

/// `n` observations all equal to `ybar`, for the conjugate model.
pub fn constant_response(n: usize, ybar: f64) -> Result<SimTruth> {
    Ok(SimTruth {
        generator: "conjugate".into(),
        seed: 0,
        params: BTreeMap::from([("ybar".to_owned(), vec![ybar])]),
        table: ColumnTable::new().with("y", Column::Real(vec![ybar; n]))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::ks_one_sample;

    fn ys(t: &SimTruth) -> Vec<f64> {
        t.table.real("y").unwrap()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn null_glmm_is_a_fair_coin() {
        let n = 4000;
        let t = simulate_bernoulli_glmm(1, n, 3, 6, &[0.0], 0.0, 0.0).unwrap();
        assert!((mean(&ys(&t)) - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn intercept_only_glmm_rate() {
        let n = 4000;
        let t = simulate_bernoulli_glmm(2, n, 2, 2, &[2.0], 0.0, 0.0).unwrap();
        let p = expit(2.0);
        assert!((p - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!((mean(&ys(&t)) - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn glmm_is_deterministic_and_nested() {
        let a = simulate_bernoulli_glmm(5, 300, 4, 12, &[0.3, -1.0], 0.7, 0.4).unwrap();
        let b = simulate_bernoulli_glmm(5, 300, 4, 12, &[0.3, -1.0], 0.7, 0.4).unwrap();
        assert_eq!(a, b);
        let c = simulate_bernoulli_glmm(6, 300, 4, 12, &[0.3, -1.0], 0.7, 0.4).unwrap();
        assert_ne!(a.table, c.table);
        let (towns, town_levels) = a.table.category("town").unwrap();
        let (states, state_levels) = a.table.category("state").unwrap();
        for (t, s) in towns.iter().zip(states) {
            let town: usize = town_levels[*t][1..].parse().unwrap();
            assert_eq!(state_levels[*s], format!("s{}", town % 4));
        }
        assert_eq!(a.table.real("x1").unwrap().len(), 300);
    }

    #[test]
    fn cox_null_times_are_unit_exponential() {
        let t = simulate_cox(3, 1000, &[0.0, 0.0], 0.0, 0, 0.0).unwrap();
        let times = t.table.real("time").unwrap();
        let ks = ks_one_sample(&times, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() }).unwrap();
        assert!(ks <= 0.05, "{ks}");
        assert!(t.table.real("event").unwrap().iter().all(|&e| e == 1.0));
    }

    #[test]
    fn cox_censoring_fraction() {
        let t = simulate_cox(4, 4000, &[], 0.0, 0, 0.25).unwrap();
        let events = t.table.real("event").unwrap();
        let censored = 1.0 - mean(&events);
        assert!((censored - 0.25).abs() < 0.03, "{censored}");
    }

    #[test]
    fn single_group_without_spread_has_constant_frailty() {
        let t = simulate_cox(8, 50, &[0.5], 0.0, 1, 0.1).unwrap();
        let f = t.table.real("frailty").unwrap();
        assert!(f.iter().all(|&v| v == f[0]));
        let (codes, levels) = t.table.category("group").unwrap();
        assert_eq!(levels.len(), 1);
        assert!(codes.iter().all(|&c| c == 0));
    }

    #[test]
    fn aggregate_layout_and_shared_cells() {
        let t = simulate_poisson_aggregate(9, 30, 2, 3, &[], 1.0).unwrap();
        assert_eq!(t.table.nrows(), 60);
        let cells = t.table.real("cell").unwrap();
        assert_eq!(&cells[..6], &[0.0, 1.0, 2.0, 0.0, 1.0, 2.0]);
        let pops = t.table.real("population").unwrap();
        assert!(pops.iter().all(|p| (5.0..15.0).contains(p)));
    }

    #[test]
    fn one_cell_regions_are_plain_poisson_regression() {
        let beta = [1.0, 0.5];
        let t = simulate_poisson_aggregate(10, 200, 1, 200, &beta, 0.0).unwrap();
        let cells = t.table.real("cell").unwrap();
        let regions = t.table.real("region").unwrap();
        assert_eq!(cells, regions);
        // Pearson residuals of a correctly specified Poisson regression
        let (y, pop, x) = (ys(&t), t.table.real("population").unwrap(), t.table.real("x1").unwrap());
        let z: Vec<f64> = (0..200)
            .map(|i| {
                let mu = pop[i] * (beta[0] + beta[1] * x[i]).exp();
                (y[i] - mu) / mu.sqrt()
            })
            .collect();
        assert!(mean(&z).abs() < 4.0 / (200f64).sqrt());
        let var = z.iter().map(|v| v * v).sum::<f64>() / 200.0;
        assert!((var - 1.0).abs() < 0.4, "{var}");
    }

    #[test]
    fn bad_arguments() {
        assert!(simulate_bernoulli_glmm(0, 0, 1, 1, &[0.0], 1.0, 1.0).is_err());
        assert!(simulate_bernoulli_glmm(0, 5, 1, 1, &[0.0], -1.0, 1.0).is_err());
        assert!(simulate_cox(0, 5, &[0.0], 0.0, 0, 1.0).is_err());
        assert!(simulate_poisson_aggregate(0, 5, 4, 3, &[], 1.0).is_err());
    }
}
