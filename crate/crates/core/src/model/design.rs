//! Compressed-row design matrix mapping latent weights to additive predictors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseDesign {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseDesign {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!(
                    "design entry ({r},{c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidModel(format!("design entry ({r},{c}) is {v}")));
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged.into_iter().filter(|e| e.1 != 0.0) {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(z: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..z.nrows() {
            for j in 0..z.ncols() {
                if z[(i, j)] != 0.0 {
                    triplets.push((i, j, z[(i, j)]));
                }
            }
        }
        Self::from_triplets(z.nrows(), z.ncols(), &triplets).expect("dense entries are in range and finite")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                z[(i, *c)] = *v;
            }
        }
        z
    }

    /// `Z w`.
    pub fn mul_vec(&self, w: &DVector<f64>) -> DVector<f64> {
        let parts = par::map_chunks(self.nrows, par::ROW_CHUNK, |range| {
            range
                .map(|i| {
                    let (cols, vals) = self.row(i);
                    cols.iter().zip(vals).map(|(c, v)| v * w[*c]).sum::<f64>()
                })
                .collect::<Vec<f64>>()
        });
        DVector::from_iterator(self.nrows, parts.into_iter().flatten())
    }

    /// `Z^T g`.
    pub fn tr_mul_vec(&self, g: &DVector<f64>) -> DVector<f64> {
        let parts = par::map_chunks(self.nrows, par::ROW_CHUNK, |range| {
            let mut acc = DVector::zeros(self.ncols);
            for i in range {
                let (cols, vals) = self.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    acc[*c] += v * g[i];
                }
            }
            acc
        });
        parts.into_iter().fold(DVector::zeros(self.ncols), |a, b| a + b)
    }

    /// `Z^T diag(c) Z`.
    pub fn weighted_gram(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let m = self.ncols;
        let parts = par::map_chunks(self.nrows, par::ROW_CHUNK, |range| {
            let mut acc = DMatrix::zeros(m, m);
            for i in range {
                let ci = c[i];
                if ci == 0.0 {
                    continue;
                }
                let (cols, vals) = self.row(i);
                for (a, va) in cols.iter().zip(vals) {
                    for (b, vb) in cols.iter().zip(vals) {
                        acc[(*a, *b)] += ci * va * vb;
                    }
                }
            }
            acc
        });
        parts.into_iter().fold(DMatrix::zeros(m, m), |a, b| a + b)
    }

    /// `Z_J^T B Z_J` for the rows listed in `rows`.
    pub fn block_gram(&self, rows: &[usize], block: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        for (p, &i) in rows.iter().enumerate() {
            let (ci, vi) = self.row(i);
            for (q, &j) in rows.iter().enumerate() {
                let bij = block[(p, q)];
                if bij == 0.0 {
                    continue;
                }
                let (cj, vj) = self.row(j);
                for (a, va) in ci.iter().zip(vi) {
                    for (b, vb) in cj.iter().zip(vj) {
                        out[(*a, *b)] += bij * va * vb;
                    }
                }
            }
        }
    }

    /// `Z^T C Z` for a dense `C`.
    pub fn dense_gram(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self.to_dense();
        let out = z.transpose() * (c * &z);
        (&out + out.transpose()) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> SparseDesign {
        SparseDesign::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, 2.0), (2, 0, 1.0), (2, 1, -1.0), (2, 1, 0.5)]).unwrap()
    }

    #[test]
    fn products_match_dense() {
        let z = example();
        let d = z.to_dense();
        assert_eq!(d[(2, 1)], -0.5);
        let w = DVector::from_vec(vec![0.3, -2.0]);
        assert_eq!(z.mul_vec(&w), &d * &w);
        let g = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((z.tr_mul_vec(&g) - d.transpose() * &g).amax() < 1e-15);
        let c = DVector::from_vec(vec![0.5, 1.5, 2.0]);
        let want = d.transpose() * DMatrix::from_diagonal(&c) * &d;
        assert!((z.weighted_gram(&c) - &want).amax() < 1e-14);
        assert!((z.dense_gram(&DMatrix::from_diagonal(&c)) - &want).amax() < 1e-14);
        let mut out = DMatrix::zeros(2, 2);
        z.block_gram(&[0, 1, 2], &DMatrix::from_diagonal(&c), &mut out);
        assert!((out - want).amax() < 1e-14);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SparseDesign::from_triplets(1, 1, &[(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn zero_columns() {
        let z = SparseDesign::from_triplets(4, 0, &[]).unwrap();
        assert_eq!(z.mul_vec(&DVector::zeros(0)), DVector::zeros(4));
    }
}
