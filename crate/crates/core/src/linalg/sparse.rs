//! Compressed sparse row storage.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Sparse matrix in CSR format. Column indices are sorted within each row and
/// duplicate entries are summed during construction.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) out of range for {nrows}x{ncols} matrix"
                )));
            }
        }
        let mut counts = vec![0usize; nrows + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0f64; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            let pos = next[i];
            cols[pos] = j;
            vals[pos] = v;
            next[i] += 1;
        }
        // Sort each row and compress duplicates.
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        for i in 0..nrows {
            let (lo, hi) = (counts[i], counts[i + 1]);
            let mut entries: Vec<(usize, f64)> = cols[lo..hi]
                .iter()
                .copied()
                .zip(vals[lo..hi].iter().copied())
                .collect();
            entries.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in entries {
                if out_cols.len() > row_ptr[i] && *out_cols.last().unwrap() == c {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c);
                    out_vals.push(v);
                }
            }
            row_ptr[i + 1] = out_cols.len();
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx: out_cols,
            values: out_vals,
        })
    }

    pub fn identity(n: usize) -> Self {
        let trip: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &trip).expect("identity triplets are valid")
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[]).expect("empty triplets are valid")
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

    /// Entry accessor (binary search within the row); zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals.iter())
                .map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn mul_vec_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                acc += v * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows);
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_transpose_vec_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        out.fill(0.0);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let xi = x[i];
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                out[j] += v * xi;
            }
        }
    }

    pub fn mul_transpose_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        self.mul_transpose_vec_into(x, &mut out);
        out
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transposed triplets are valid")
    }

    /// `self + alpha * other`, merging sparsity patterns.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch(
                "matrix addition requires equal shapes".into(),
            ));
        }
        let mut trip: Vec<_> = self.iter().collect();
        trip.extend(other.iter().map(|(i, j, v)| (i, j, alpha * v)));
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        let scale = self.max_abs().max(1e-300);
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = t.row(i);
            if ca.len() != cb.len() {
                // Pattern mismatch can still be numerically symmetric if the
                // extra entries are tiny; fall back to entry comparison.
                let all = ca.iter().chain(cb.iter());
                for &j in all {
                    if (self.get(i, j) - self.get(j, i)).abs() > tol * scale {
                        return false;
                    }
                }
                continue;
            }
            for ((&ja, &a), (&jb, &b)) in ca.iter().zip(va).zip(cb.iter().zip(vb)) {
                if ja != jb || (a - b).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Lower and upper bandwidths of the sparsity pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for (i, j, _) in self.iter() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        (kl, ku)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 2.0), (0, 0, 1.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(0, 1), 5.0);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matvec_and_transpose() {
        // [[1, 2], [0, 3]]
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)]).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let y = a.mul_vec(&x);
        assert_eq!(y.as_slice(), &[5.0, 6.0]);
        let yt = a.mul_transpose_vec(&x);
        assert_eq!(yt.as_slice(), &[1.0, 8.0]);
        let at = a.transpose();
        assert_eq!(at.get(1, 0), 2.0);
        assert_eq!(at.get(0, 1), 0.0);
    }

    #[test]
    fn symmetry_and_bandwidths() {
        let sym =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 2.0)])
                .unwrap();
        assert!(sym.is_symmetric(1e-14));
        let asym = CsrMatrix::from_triplets(2, 2, &[(0, 1, 0.5), (1, 0, 0.25)]).unwrap();
        assert!(!asym.is_symmetric(1e-14));
        assert_eq!(sym.bandwidths(), (1, 1));
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        let b = CsrMatrix::from_triplets(2, 2, &[(1, 1, 2.0), (0, 0, 1.0)]).unwrap();
        let c = a.add_scaled(&b, 2.0).unwrap();
        assert_eq!(c.get(0, 0), 3.0);
        assert_eq!(c.get(1, 1), 4.0);
    }
}
