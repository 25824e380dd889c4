//! Cholesky factorisation with diagonal jitter, in dense or profile storage.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const JITTER_START: f64 = 1e-10;
const JITTER_STEPS: usize = 8;
/// Fill fraction above which dense storage is used.
pub const DENSE_FILL_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    Dense,
    /// Variable-band (skyline) storage of each row from its first nonzero.
    Profile,
}

impl Storage {
    /// Dense when more than a quarter of the entries are structurally nonzero.
    pub fn for_fill(nonzeros: usize, dim: usize) -> Self {
        if dim == 0 || nonzeros as f64 > DENSE_FILL_THRESHOLD * (dim * dim) as f64 {
            Storage::Dense
        } else {
            Storage::Profile
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum Factor {
    Dense(DMatrix<f64>),
    /// Row `i` holds `L[i, first[i]..=i]`.
    Profile { first: Vec<usize>, rows: Vec<Vec<f64>> },
}

/// Lower-triangular `L` with `L L^T = A + jitter * I`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CholeskyFactor {
    dim: usize,
    factor: Factor,
    log_det: f64,
    jitter: f64,
}

/// Factors `a`, picking storage from its nonzero count.
pub fn cholesky(a: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let nnz = a.iter().filter(|v| **v != 0.0).count();
    cholesky_with(a, Storage::for_fill(nnz, a.nrows()))
}

/// Factors `a` in the requested storage, escalating diagonal jitter on failure.
pub fn cholesky_with(a: &DMatrix<f64>, storage: Storage) -> Result<CholeskyFactor> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::Dimension(format!("cholesky of a {}x{} matrix", m, a.ncols())));
    }
    check_symmetric(a)?;
    let mean_diag = if m == 0 { 0.0 } else { a.diagonal().iter().map(|d| d.abs()).sum::<f64>() / m as f64 };
    let base = JITTER_START * if mean_diag > 0.0 && mean_diag.is_finite() { mean_diag } else { 1.0 };

    let mut jitter = 0.0;
    let mut last_pivot = 0;
    for attempt in 0..=JITTER_STEPS {
        if attempt > 0 {
            jitter = base * 10f64.powi(attempt as i32 - 1);
        }
        let result = match storage {
            Storage::Dense => factor_dense(a, jitter),
            Storage::Profile => factor_profile(a, jitter),
        };
        match result {
            Ok(factor) => {
                let mut out = CholeskyFactor { dim: m, factor, log_det: 0.0, jitter };
                out.log_det = 2.0 * (0..m).map(|i| out.diag(i).ln()).sum::<f64>();
                if jitter > 0.0 {
                    log::debug!("cholesky needed jitter {jitter:e} on a {m}x{m} matrix");
                }
                return Ok(out);
            }
            Err(pivot) => last_pivot = pivot,
        }
    }
    Err(Error::NotPositiveDefinite { pivot: last_pivot, jitter })
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for j in 0..a.ncols() {
        for i in j + 1..a.nrows() {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > SYMMETRY_TOL * scale || diff.is_nan() {
                return Err(Error::NotSymmetric { i, j, diff });
            }
        }
    }
    Ok(())
}

fn factor_dense(a: &DMatrix<f64>, jitter: f64) -> std::result::Result<Factor, usize> {
    let m = a.nrows();
    let mut l = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let mut d = a[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..m {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Factor::Dense(l))
}

fn factor_profile(a: &DMatrix<f64>, jitter: f64) -> std::result::Result<Factor, usize> {
    let m = a.nrows();
    let first: Vec<usize> = (0..m).map(|i| (0..i).find(|&j| a[(i, j)] != 0.0).unwrap_or(i)).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let fi = first[i];
        let mut row = vec![0.0; i - fi + 1];
        for j in fi..i {
            let fj = first[j];
            let start = fi.max(fj);
            let mut s = a[(i, j)];
            let rj = &rows[j];
            for k in start..j {
                s -= row[k - fi] * rj[k - fj];
            }
            row[j - fi] = s / rj[j - fj];
        }
        let mut d = a[(i, i)] + jitter;
        for v in &row[..i - fi] {
            d -= v * v;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(i);
        }
        row[i - fi] = d.sqrt();
        rows.push(row);
    }
    Ok(Factor::Profile { first, rows })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `log |A + jitter I|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn storage(&self) -> Storage {
        match self.factor {
            Factor::Dense(_) => Storage::Dense,
            Factor::Profile { .. } => Storage::Profile,
        }
    }

    fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    /// Entry `L[i, j]` (zero above the diagonal or outside the profile).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            return 0.0;
        }
        match &self.factor {
            Factor::Dense(l) => l[(i, j)],
            Factor::Profile { first, rows } => {
                if j < first[i] {
                    0.0
                } else {
                    rows[i][j - first[i]]
                }
            }
        }
    }

    pub fn to_dense_l(&self) -> DMatrix<f64> {
        match &self.factor {
            Factor::Dense(l) => l.clone(),
            Factor::Profile { .. } => DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j)),
        }
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = b.clone();
        for i in 0..self.dim {
            let s: f64 = match &self.factor {
                Factor::Dense(l) => (0..i).map(|k| l[(i, k)] * y[k]).sum(),
                Factor::Profile { first, rows } => {
                    let fi = first[i];
                    (fi..i).map(|k| rows[i][k - fi] * y[k]).sum()
                }
            };
            y[i] = (y[i] - s) / self.diag(i);
        }
        y
    }

    /// Solves `L^T x = b`.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        for i in (0..self.dim).rev() {
            x[i] /= self.diag(i);
            let xi = x[i];
            match &self.factor {
                Factor::Dense(l) => {
                    for k in 0..i {
                        x[k] -= l[(i, k)] * xi;
                    }
                }
                Factor::Profile { first, rows } => {
                    let fi = first[i];
                    for k in fi..i {
                        x[k] -= rows[i][k - fi] * xi;
                    }
                }
            }
        }
        x
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `(L L^T)^{-1}`, symmetrised.
    pub fn inverse(&self) -> DMatrix<f64> {
        let m = self.dim;
        let mut inv = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        (&inv + inv.transpose()) * 0.5
    }

    /// `L v`.
    pub fn mul_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim, |i, _| (0..=i).map(|k| self.get(i, k) * v[k]).sum())
    }

    /// `v^T (L L^T) v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for k in 0..self.dim {
            let s: f64 = (k..self.dim).map(|i| self.get(i, k) * v[i]).sum();
            total += s * s;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity() {
        let f = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.to_dense_l(), DMatrix::identity(3, 3));
        assert_eq!(f.log_det(), 0.0);
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn two_by_two_by_hand() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        for storage in [Storage::Dense, Storage::Profile] {
            let f = cholesky_with(&a, storage).unwrap();
            let l = f.to_dense_l();
            assert_relative_eq!(l[(0, 0)], 2.0, epsilon = 1e-15);
            assert_relative_eq!(l[(1, 0)], 1.0, epsilon = 1e-15);
            assert_eq!(l[(0, 1)], 0.0);
            assert_relative_eq!(l[(1, 1)], 2f64.sqrt(), epsilon = 1e-15);
            assert_relative_eq!(f.log_det(), 8f64.ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn indefinite_fails_after_escalation() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky(&a) {
            Err(Error::NotPositiveDefinite { pivot, jitter }) => {
                assert_eq!(pivot, 1);
                assert!(jitter > 0.0 && jitter < 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(matches!(cholesky(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn singular_matrix_takes_jitter() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = cholesky(&a).unwrap();
        assert!(f.jitter() > 0.0);
        let l = f.to_dense_l();
        let r = &l * l.transpose() - &a - DMatrix::identity(2, 2) * f.jitter();
        assert!(r.amax() <= 1e-8);
    }

    #[test]
    fn zero_matrix_takes_absolute_jitter() {
        let f = cholesky(&DMatrix::zeros(1, 1)).unwrap();
        assert!(f.jitter() > 0.0);
    }

    #[test]
    fn profile_skips_leading_zeros() {
        // arrow matrix: only the last row and the diagonal are filled
        let m = 6;
        let mut a = DMatrix::<f64>::identity(m, m) * 4.0;
        for j in 0..m - 1 {
            a[(m - 1, j)] = 1.0;
            a[(j, m - 1)] = 1.0;
        }
        let f = cholesky_with(&a, Storage::Profile).unwrap();
        let g = cholesky_with(&a, Storage::Dense).unwrap();
        assert!((f.to_dense_l() - g.to_dense_l()).amax() < 1e-14);
        assert_relative_eq!(f.log_det(), g.log_det(), epsilon = 1e-13);
        let b = DVector::from_fn(m, |i, _| i as f64 - 2.0);
        assert!((f.solve(&b) - g.solve(&b)).amax() < 1e-14);
        assert!((&a * f.solve(&b) - &b).amax() < 1e-13);
    }

    #[test]
    fn storage_selection() {
        assert_eq!(Storage::for_fill(10, 10), Storage::Profile);
        assert_eq!(Storage::for_fill(26, 10), Storage::Dense);
        let f = cholesky(&DMatrix::identity(8, 8)).unwrap();
        assert_eq!(f.storage(), Storage::Profile);
    }

    fn spd(m: usize, entries: &[f64]) -> DMatrix<f64> {
        let b = DMatrix::from_fn(m, m, |i, j| entries[(i * 7 + j * 13) % entries.len()]);
        &b * b.transpose() + DMatrix::identity(m, m) * (m as f64 * 0.1)
    }

    proptest! {
        #[test]
        fn round_trip(m in 1usize..=50, entries in proptest::collection::vec(-1.0f64..1.0, 64), dense in any::<bool>()) {
            let a = spd(m, &entries);
            let storage = if dense { Storage::Dense } else { Storage::Profile };
            let f = cholesky_with(&a, storage).unwrap();
            prop_assert_eq!(f.jitter(), 0.0);
            let l = f.to_dense_l();
            let err = (&l * l.transpose() - &a).amax() / a.amax();
            prop_assert!(err <= 1e-10, "{}", err);
            let b = DVector::from_fn(m, |i, _| (i as f64).sin());
            let x = f.solve(&b);
            prop_assert!((&a * &x - &b).amax() <= 1e-8 * a.amax() * x.amax().max(1.0));
            prop_assert!((f.quad_form(&b) - (b.transpose() * &a * &b)[(0, 0)]).abs() <= 1e-9 * a.amax() * b.norm_squared().max(1.0));
            let inv = f.inverse();
            prop_assert!((&a * inv - DMatrix::identity(m, m)).amax() <= 1e-6);
        }
    }
}
