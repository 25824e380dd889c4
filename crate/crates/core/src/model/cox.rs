//! Cox proportional hazards through the partial likelihood.
//!
//! Rows are ordered by time (ties keep input order), and the event at sorted
//! position `i` has risk set `{i, ..., n-1}`. Every observation therefore
//! shares predictors with every later one and `C_eta` is dense.

use nalgebra::{DMatrix, DVector};

use super::likelihood::{EtaHessian, IndexSets, Likelihood};
use super::prior::{HyperParam, LatentBlock, LatentPrior};
use super::{design::SparseDesign, ElgmModel, PriorSettings};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CoxPartialLikelihood {
    /// Event indicator per sorted row.
    event: Vec<bool>,
    event_rows: Vec<usize>,
}

/// Scaled risk-set quantities at one `eta`.
struct RiskSums {
    /// `exp(eta_j - c)`.
    scaled: Vec<f64>,
    /// Running sums over events up to `j` of `1/S_i` and `1/S_i^2`.
    a: Vec<f64>,
    b: Vec<f64>,
    /// Risk-set totals `S_i` at the event rows.
    s: Vec<f64>,
    shift: f64,
}

impl CoxPartialLikelihood {
    pub fn new(event: Vec<bool>) -> Result<Self> {
        let event_rows: Vec<usize> = (0..event.len()).filter(|&i| event[i]).collect();
        if event_rows.first() != Some(&0) {
            return Err(Error::InvalidModel(
                "partial likelihood needs an event in the first sorted row".into(),
            ));
        }
        Ok(Self { event, event_rows })
    }

    fn sums(&self, eta: &DVector<f64>) -> RiskSums {
        let n = eta.len();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
        let mut tail = vec![0.0; n + 1];
        for j in (0..n).rev() {
            tail[j] = tail[j + 1] + scaled[j];
        }
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut s = Vec::with_capacity(self.event_rows.len());
        let (mut run_a, mut run_b) = (0.0, 0.0);
        for j in 0..n {
            if self.event[j] {
                let sj = tail[j];
                run_a += 1.0 / sj;
                run_b += 1.0 / (sj * sj);
                s.push(sj);
            }
            a[j] = run_a;
            b[j] = run_b;
        }
        RiskSums { scaled, a, b, s, shift }
    }
}

impl Likelihood for CoxPartialLikelihood {
    fn name(&self) -> &'static str {
        "cox-ph"
    }

    fn n_obs(&self) -> usize {
        self.event_rows.len()
    }

    fn n_predictors(&self) -> usize {
        self.event.len()
    }

    fn index_sets(&self) -> IndexSets {
        IndexSets::Suffixes {
            starts: self.event_rows.clone(),
            n: self.event.len(),
        }
    }

    fn log_lik(&self, eta: &DVector<f64>, _: &[f64]) -> f64 {
        let r = self.sums(eta);
        self.event_rows
            .iter()
            .zip(&r.s)
            .map(|(&i, s)| eta[i] - r.shift - s.ln())
            .sum()
    }

    fn grad(&self, eta: &DVector<f64>, _: &[f64]) -> DVector<f64> {
        let r = self.sums(eta);
        DVector::from_fn(eta.len(), |j, _| f64::from(u8::from(self.event[j])) - r.scaled[j] * r.a[j])
    }

    fn neg_hessian(&self, eta: &DVector<f64>, _: &[f64]) -> EtaHessian {
        let r = self.sums(eta);
        let n = eta.len();
        EtaHessian::Dense(DMatrix::from_fn(n, n, |j, l| {
            let cross = r.scaled[j] * r.scaled[l] * r.b[j.min(l)];
            if j == l {
                r.scaled[j] * r.a[j] - cross
            } else {
                -cross
            }
        }))
    }

    /// `sum_j e_j A_j z_j z_j^T - sum_events v_i v_i^T / S_i^2`, where `v_i`
    /// is the suffix sum of `e_j z_j`; linear in `n`.
    fn project_hessian(&self, eta: &DVector<f64>, _: &[f64], z: &SparseDesign) -> Option<DMatrix<f64>> {
        let r = self.sums(eta);
        let m = z.ncols();
        let n = eta.len();
        let mut out = DMatrix::zeros(m, m);
        let mut suffix = DVector::<f64>::zeros(m);
        let mut next_event = self.event_rows.len();
        for j in (0..n).rev() {
            let (cols, vals) = z.row(j);
            let wj = r.scaled[j] * r.a[j];
            for (a, va) in cols.iter().zip(vals) {
                suffix[*a] += r.scaled[j] * va;
                for (b, vb) in cols.iter().zip(vals) {
                    out[(*a, *b)] += wj * va * vb;
                }
            }
            if self.event[j] {
                next_event -= 1;
                let inv = 1.0 / (r.s[next_event] * r.s[next_event]);
                out.ger(-inv, &suffix, &suffix, 1.0);
            }
        }
        Some((&out + out.transpose()) * 0.5)
    }
}

/// Survival times with censoring, covariates and an optional frailty group.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxData {
    pub time: Vec<f64>,
    /// `true` when the time is a censoring time rather than an event.
    pub censored: Vec<bool>,
    pub x: DMatrix<f64>,
    pub group: Option<Vec<usize>>,
    pub n_groups: usize,
}

/// Partial-likelihood Cox model `eta_i = x_i^T beta + u[group_i]` without an
/// intercept, `u ~ N(0, sd^2)` and `theta = (log sd)` when a group is given.
///
/// Latent order is `(u, beta)`. Censored rows earlier than every event enter
/// no risk set and are dropped.
pub fn cox_ph_partial(data: &CoxData, settings: PriorSettings) -> Result<ElgmModel> {
    let n = data.time.len();
    let p = data.x.ncols();
    if data.censored.len() != n || data.x.nrows() != n {
        return Err(Error::Dimension(format!(
            "cox data has {n} times, {} censoring flags and {} covariate rows",
            data.censored.len(),
            data.x.nrows()
        )));
    }
    if let Some(i) = data.time.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidModel(format!("time {i} is not finite")));
    }
    let d = match &data.group {
        Some(g) => {
            if g.len() != n || g.iter().any(|&k| k >= data.n_groups) || data.n_groups == 0 {
                return Err(Error::InvalidModel("frailty groups are missing or out of range".into()));
            }
            data.n_groups
        }
        None => 0,
    };
    if p + d == 0 {
        return Err(Error::InvalidModel("cox model needs covariates or a frailty group".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.time[a].total_cmp(&data.time[b]));
    let first_event = order
        .iter()
        .position(|&i| !data.censored[i])
        .ok_or_else(|| Error::InvalidModel("every observation is censored".into()))?;
    let kept = &order[first_event..];

    let mut triplets = Vec::with_capacity(kept.len() * (p + 1));
    for (r, &i) in kept.iter().enumerate() {
        if let Some(g) = &data.group {
            triplets.push((r, g[i], 1.0));
        }
        for j in 0..p {
            triplets.push((r, d + j, data.x[(i, j)]));
        }
    }
    let mut blocks = Vec::new();
    let mut hypers = Vec::new();
    if d > 0 {
        blocks.push(LatentBlock::Iid { name: "u".into(), size: d, hyper: 0 });
        hypers.push(HyperParam::log_sd("frailty_sd"));
    }
    if p > 0 {
        blocks.push(LatentBlock::Fixed { name: "beta".into(), variances: vec![settings.beta_variance; p] });
    }
    let event = kept.iter().map(|&i| !data.censored[i]).collect();
    ElgmModel::new(
        Box::new(CoxPartialLikelihood::new(event)?),
        SparseDesign::from_triplets(kept.len(), d + p, &triplets)?,
        LatentPrior::new(blocks)?,
        hypers,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::check_eta_derivatives;
    use crate::model::{LatentModel, Pattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn two_events_by_hand() {
        let lik = CoxPartialLikelihood::new(vec![true, true]).unwrap();
        let v = lik.log_lik(&DVector::zeros(2), &[]);
        assert!((v + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn eta_hessian_is_dense() {
        let lik = CoxPartialLikelihood::new(vec![true, false, true, true, false]).unwrap();
        let c = lik.neg_hessian(&DVector::from_vec(vec![0.1, -0.4, 0.3, 0.0, 0.2]), &[]).to_dense(5);
        assert_eq!(Pattern::of_matrix(&c).nnz(), 25);
        let sets = lik.index_sets();
        let three = CoxPartialLikelihood::new(vec![true; 3]).unwrap().index_sets();
        assert_eq!(three.get(0).as_ref(), &[0, 1, 2]);
        assert_eq!(three.get(1).as_ref(), &[1, 2]);
        assert_eq!(three.get(2).as_ref(), &[2]);
        assert!((0..5).all(|k| (0..5).all(|l| sets.shares(k, l))));
    }

    #[test]
    fn derivatives_at_random_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..5 {
            let event: Vec<bool> = (0..20).map(|i| i == 0 || rng.random_bool(0.7)).collect();
            let lik = CoxPartialLikelihood::new(event).unwrap();
            let eta = DVector::from_fn(20, |_, _| rng.random_range(-2.0..2.0));
            check_eta_derivatives(&lik, &eta, &[], 1e-5);
        }
    }

    #[test]
    fn direct_projection_matches_dense_route() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let n = 30;
        let event: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.6)).collect();
        let lik = CoxPartialLikelihood::new(event).unwrap();
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i % 3, 1.0));
            triplets.push((i, 3, rng.random_range(-1.0..1.0)));
            triplets.push((i, 4, rng.random_range(-1.0..1.0)));
        }
        let z = SparseDesign::from_triplets(n, 5, &triplets).unwrap();
        let eta = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
        let direct = lik.project_hessian(&eta, &[], &z).unwrap();
        let generic = lik.neg_hessian(&eta, &[]).project(&z);
        assert!((&direct - &generic).amax() < 1e-11 * generic.amax());
    }

    #[test]
    fn sorting_ties_and_leading_censoring() {
        let data = CoxData {
            time: vec![3.0, 1.0, 0.5, 2.0, 2.0],
            censored: vec![false, false, true, false, true],
            x: DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]),
            group: None,
            n_groups: 0,
        };
        let model = cox_ph_partial(&data, PriorSettings::default()).unwrap();
        // row with time 0.5 is censored before any event and dropped
        assert_eq!(model.n_predictors(), 4);
        let z = model.design().to_dense();
        assert_eq!(z.column(0).as_slice(), &[2.0, 4.0, 5.0, 1.0]);
        assert_eq!(model.n_obs(), 3);
        assert_eq!(model.hyper_dim(), 0);
    }

    #[test]
    fn reordering_identical_rows_leaves_joint_unchanged() {
        let base = CoxData {
            time: vec![1.0, 2.0, 3.0, 4.0],
            censored: vec![false, true, false, false],
            x: DMatrix::from_row_slice(4, 2, &[0.5, 1.0, -1.0, 0.2, 0.3, 0.3, 1.1, -0.7]),
            group: Some(vec![0, 1, 0, 1]),
            n_groups: 2,
        };
        let mut perm = base.clone();
        let idx = [2, 0, 3, 1];
        perm.time = idx.iter().map(|&i| base.time[i]).collect();
        perm.censored = idx.iter().map(|&i| base.censored[i]).collect();
        perm.x = DMatrix::from_fn(4, 2, |r, c| base.x[(idx[r], c)]);
        perm.group = Some(idx.iter().map(|&i| base.group.as_ref().unwrap()[i]).collect());
        let a = cox_ph_partial(&base, PriorSettings::default()).unwrap();
        let b = cox_ph_partial(&perm, PriorSettings::default()).unwrap();
        let w = DVector::from_vec(vec![0.2, -0.1, 0.4, 0.9]);
        let theta = DVector::from_element(1, -0.3);
        assert!((a.log_joint(&w, &theta) - b.log_joint(&w, &theta)).abs() < 1e-10);
    }
}
