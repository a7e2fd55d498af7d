//! Minimal compressed-sparse-row matrix over complex numbers.
//!
//! Bosonic ladder operators and their products are banded, so the
//! Hamiltonian term matrices stay sparse; only composite constant
//! Hamiltonians get densified (below a size threshold) for the
//! eigendecomposition path.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64 as C64;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<C64>,
}

impl Csr {
    /// Build from (row, col, value) triplets. Duplicates are summed,
    /// exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut sorted: Vec<(usize, usize, C64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data: Vec<C64> = Vec::with_capacity(sorted.len());

        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            indices.push(c);
            data.push(v);
            indptr[r + 1] += 1;
        }
        // prefix sum
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let mut out = Csr { nrows, ncols, indptr, indices, data };
        out.merge_duplicates();
        out.drop_zeros();
        out
    }

    fn merge_duplicates(&mut self) {
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        let mut indptr = vec![0usize; self.nrows + 1];
        for r in 0..self.nrows {
            let lo = self.indptr[r];
            let hi = self.indptr[r + 1];
            let mut j = lo;
            while j < hi {
                let c = self.indices[j];
                let mut v = self.data[j];
                let mut k = j + 1;
                while k < hi && self.indices[k] == c {
                    v += self.data[k];
                    k += 1;
                }
                indices.push(c);
                data.push(v);
                j = k;
            }
            indptr[r + 1] = indices.len();
        }
        self.indices = indices;
        self.data = data;
        self.indptr = indptr;
    }

    fn drop_zeros(&mut self) {
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        let mut indptr = vec![0usize; self.nrows + 1];
        for r in 0..self.nrows {
            for j in self.indptr[r]..self.indptr[r + 1] {
                if self.data[j] != C64::new(0.0, 0.0) {
                    indices.push(self.indices[j]);
                    data.push(self.data[j]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indices = indices;
        self.data = data;
        self.indptr = indptr;
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, C64::new(1.0, 0.0))).collect();
        Csr::from_triplets(n, n, &t)
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Csr::from_triplets(d.len(), d.len(), &t)
    }

    pub fn from_dense(m: &Array2<C64>, tol: f64) -> Self {
        let mut t = Vec::new();
        for ((r, c), &v) in m.indexed_iter() {
            if v.norm() > tol {
                t.push((r, c, v));
            }
        }
        Csr::from_triplets(m.nrows(), m.ncols(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for j in self.indptr[r]..self.indptr[r + 1] {
                out.push((r, self.indices[j], self.data[j]));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            for j in self.indptr[r]..self.indptr[r + 1] {
                m[[r, self.indices[j]]] += self.data[j];
            }
        }
        m
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Csr {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Csr::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scale(&self, s: C64) -> Csr {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Csr) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = self.triplets();
        t.extend(other.triplets());
        Csr::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for j in self.indptr[r]..self.indptr[r + 1] {
                let k = self.indices[j];
                let v = self.data[j];
                for l in other.indptr[k]..other.indptr[k + 1] {
                    t.push((r, other.indices[l], v * other.data[l]));
                }
            }
        }
        Csr::from_triplets(self.nrows, other.ncols, &t)
    }

    pub fn kron(&self, other: &Csr) -> Csr {
        let (p, q) = (other.nrows, other.ncols);
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * p + r2, c1 * q + c2, v1 * v2));
            }
        }
        Csr::from_triplets(self.nrows * p, self.ncols * q, &t)
    }

    /// y += alpha * A x
    pub fn matvec_acc(&self, alpha: C64, x: ArrayView1<C64>, y: &mut Array1<C64>) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        let xs = x.as_slice().expect("contiguous x");
        let ys = y.as_slice_mut().expect("contiguous y");
        for (r, w) in self.indptr.windows(2).enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for j in w[0]..w[1] {
                acc += self.data[j] * xs[self.indices[j]];
            }
            ys[r] += alpha * acc;
        }
    }

    pub fn matvec(&self, x: ArrayView1<C64>) -> Array1<C64> {
        let mut y = Array1::zeros(self.nrows);
        self.matvec_acc(C64::new(1.0, 0.0), x, &mut y);
        y
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Infinity norm (max absolute row sum); cheap spectral bound.
    pub fn norm_inf(&self) -> f64 {
        let mut best = 0.0f64;
        for r in 0..self.nrows {
            let s: f64 = (self.indptr[r]..self.indptr[r + 1]).map(|j| self.data[j].norm()).sum();
            best = best.max(s);
        }
        best
    }
}
