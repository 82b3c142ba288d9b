//! Banded direct factorizations.
//!
//! The structured meshes used throughout this crate produce matrices whose
//! bandwidth under lexicographic interior numbering is about the number of
//! grid points per line, so a band solver gives near-optimal direct solves
//! without any fill-in bookkeeping. Bandwidths are taken from the sparsity
//! pattern, so any `CsrMatrix` is accepted; dense-ish inputs simply degrade
//! to dense cost.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::sparse::CsrMatrix;

/// L L^T factorization of a symmetric positive definite band matrix.
/// Stores the lower band column-wise: entry (i, j) with 0 <= i - j <= kl
/// lives at `data[j * (kl + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    kl: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::DimensionMismatch("Cholesky needs a square matrix".into()));
        }
        let (kl, ku) = a.bandwidths();
        let kl = kl.max(ku);
        let stride = kl + 1;
        let mut data = vec![0.0f64; n * stride];
        for (i, j, v) in a.iter() {
            if i >= j {
                data[j * stride + (i - j)] = v;
            }
        }
        for j in 0..n {
            let kmin = j.saturating_sub(kl);
            let mut d = data[j * stride];
            for k in kmin..j {
                let ljk = data[k * stride + (j - k)];
                d -= ljk * ljk;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = d.sqrt();
            data[j * stride] = ljj;
            let imax = (j + kl).min(n - 1);
            for i in (j + 1)..=imax {
                let kmin2 = i.saturating_sub(kl);
                let mut s = data[j * stride + (i - j)];
                for k in kmin2..j {
                    s -= data[k * stride + (i - k)] * data[k * stride + (j - k)];
                }
                data[j * stride + (i - j)] = s / ljj;
            }
        }
        Ok(Self { n, kl, data })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, stride) = (self.n, self.kl, self.kl + 1);
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let jmin = i.saturating_sub(kl);
            let mut s = b[i];
            for j in jmin..i {
                s -= self.data[j * stride + (i - j)] * b[j];
            }
            b[i] = s / self.data[i * stride];
        }
        for i in (0..n).rev() {
            let jmax = (i + kl).min(n - 1);
            let mut s = b[i];
            for j in (i + 1)..=jmax {
                s -= self.data[i * stride + (j - i)] * b[j];
            }
            b[i] = s / self.data[i * stride];
        }
    }
}

/// LU factorization with partial pivoting of a general band matrix.
/// Column-wise band storage with room for pivoting fill: entry (i, j) with
/// -(kl + ku) <= i - j <= kl lives at `data[j * h + (i - j + kl + ku)]`
/// where `h = 2 * kl + ku + 1`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    kw: usize, // upper bandwidth after fill: kl + ku
    data: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::DimensionMismatch("LU needs a square matrix".into()));
        }
        let (kl, ku) = a.bandwidths();
        let kw = kl + ku;
        let h = kl + kw + 1;
        let mut data = vec![0.0f64; n * h];
        let at = |i: usize, j: usize| -> usize { j * h + (i + kw - j) };
        for (i, j, v) in a.iter() {
            data[at(i, j)] = v;
        }
        let mut ipiv = vec![0usize; n];
        for k in 0..n {
            let pmax = (k + kl).min(n - 1);
            let mut r = k;
            let mut best = data[at(k, k)].abs();
            for i in (k + 1)..=pmax {
                let v = data[at(i, k)].abs();
                if v > best {
                    best = v;
                    r = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { pivot: k });
            }
            ipiv[k] = r;
            let jmax = (k + kw).min(n - 1);
            if r != k {
                for j in k..=jmax {
                    data.swap(at(k, j), at(r, j));
                }
            }
            let pivot = data[at(k, k)];
            for i in (k + 1)..=pmax {
                let m = data[at(i, k)] / pivot;
                data[at(i, k)] = m;
                if m != 0.0 {
                    for j in (k + 1)..=jmax {
                        data[at(i, j)] -= m * data[at(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, kl, kw, data, ipiv })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * (self.kl + self.kw + 1) + (i + self.kw - j)]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for k in 0..n {
            if self.ipiv[k] != k {
                b.swap(k, self.ipiv[k]);
            }
            let imax = (k + self.kl).min(n - 1);
            let bk = b[k];
            for i in (k + 1)..=imax {
                b[i] -= self.at(i, k) * bk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + self.kw).min(n - 1);
            let mut s = b[k];
            for j in (k + 1)..=jmax {
                s -= self.at(k, j) * b[j];
            }
            b[k] = s / self.at(k, k);
        }
    }

    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // U^T w = b (U^T is lower triangular with bandwidth kw).
        for k in 0..n {
            let imin = k.saturating_sub(self.kw);
            let mut s = b[k];
            for i in imin..k {
                s -= self.at(i, k) * b[i];
            }
            b[k] = s / self.at(k, k);
        }
        // Undo the interleaved elimination/permutation sequence transposed.
        for k in (0..n).rev() {
            let imax = (k + self.kl).min(n - 1);
            let mut s = b[k];
            for i in (k + 1)..=imax {
                s -= self.at(i, k) * b[i];
            }
            b[k] = s;
            if self.ipiv[k] != k {
                b.swap(k, self.ipiv[k]);
            }
        }
    }
}

/// Factorization kind requested from [`factorize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    SymmetricPositiveDefinite,
    General,
}

/// A direct factorization of a sparse matrix.
#[derive(Debug, Clone)]
pub enum Factorization {
    Cholesky(BandCholesky),
    Lu(BandLu),
}

/// Factor a sparse matrix. The SPD kind verifies symmetry and uses a band
/// Cholesky; the general kind uses band LU with partial pivoting.
pub fn factorize(a: &CsrMatrix, kind: FactorKind) -> Result<Factorization> {
    match kind {
        FactorKind::SymmetricPositiveDefinite => {
            if !a.is_symmetric(1e-10) {
                return Err(Error::InvalidParameter(
                    "SPD factorization requested for a nonsymmetric matrix".into(),
                ));
            }
            Ok(Factorization::Cholesky(BandCholesky::factor(a)?))
        }
        FactorKind::General => Ok(Factorization::Lu(BandLu::factor(a)?)),
    }
}

impl Factorization {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        match self {
            Factorization::Cholesky(c) => c.solve_in_place(b),
            Factorization::Lu(lu) => lu.solve_in_place(b),
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        match self {
            Factorization::Cholesky(c) => c.solve_in_place(b),
            Factorization::Lu(lu) => lu.solve_transpose_in_place(b),
        }
    }

    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_transpose_in_place(x.as_mut_slice());
        x
    }
}
