//! Row-compressed complex sparse matrices.
//!
//! Rows are stored as column-sorted `(col, value)` lists. Exact zeros produced
//! by cancellation are kept out of the pattern so that support queries are
//! meaningful.

use faer::Mat;
use num_complex::Complex64;

use super::LinearOperator;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, rows: vec![Vec::new(); nrows] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal((0..n).map(|_| Complex64::new(1.0, 0.0)))
    }

    pub fn from_diagonal(diag: impl IntoIterator<Item = Complex64>) -> Self {
        let rows: Vec<Vec<(usize, Complex64)>> = diag
            .into_iter()
            .enumerate()
            .map(|(i, v)| if v == Complex64::new(0.0, 0.0) { Vec::new() } else { vec![(i, v)] })
            .collect();
        let n = rows.len();
        Self { nrows: n, ncols: n, rows }
    }

    /// Duplicate coordinates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) outside {nrows}x{ncols}");
            rows[i].push((j, v));
        }
        for row in &mut rows {
            compress_row(row);
        }
        Self { nrows, ncols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, Complex64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => row[pos].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }

    pub fn adjoint(&self) -> Self {
        let mut rows = vec![Vec::new(); self.ncols];
        for (i, j, v) in self.triplets() {
            rows[j].push((i, v.conj()));
        }
        // rows were filled in increasing i, so each is already sorted
        Self { nrows: self.ncols, ncols: self.nrows, rows }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| (j, v * s)).filter(|e| !is_zero(e.1)).collect())
            .collect();
        Self { nrows: self.nrows, ncols: self.ncols, rows }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, Complex64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, Complex64::new(-1.0, 0.0))
    }

    fn combine(&self, other: &Self, sign: Complex64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "shape mismatch");
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let mut row: Vec<_> = a.iter().copied().chain(b.iter().map(|&(j, v)| (j, v * sign))).collect();
                compress_row(&mut row);
                row
            })
            .collect();
        Self { nrows: self.nrows, ncols: self.ncols, rows }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimension mismatch");
        let mut acc = vec![Complex64::new(0.0, 0.0); other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut pattern = Vec::new();
        let rows = self
            .rows
            .iter()
            .map(|row| {
                for &(k, a) in row {
                    for &(j, b) in &other.rows[k] {
                        if !touched[j] {
                            touched[j] = true;
                            pattern.push(j);
                        }
                        acc[j] += a * b;
                    }
                }
                pattern.sort_unstable();
                let out: Vec<_> = pattern
                    .iter()
                    .filter_map(|&j| {
                        let v = acc[j];
                        acc[j] = Complex64::new(0.0, 0.0);
                        touched[j] = false;
                        (!is_zero(v)).then_some((j, v))
                    })
                    .collect();
                pattern.clear();
                out
            })
            .collect();
        Self { nrows: self.nrows, ncols: other.ncols, rows }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.ncols);
        self.rows.iter().map(|row| row.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.triplets().map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    /// Drops entries with modulus at or below `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| row.iter().copied().filter(|e| e.1.norm() > tol).collect())
            .collect();
        Self { nrows: self.nrows, ncols: self.ncols, rows }
    }

    /// Kronecker product `self ⊗ block` with `block` dense; the site index is the
    /// slow one.
    pub fn kron_dense(&self, block: &Mat<Complex64>) -> Self {
        let (bn, bm) = (block.nrows(), block.ncols());
        let triplets = self.triplets().flat_map(|(i, j, v)| {
            (0..bn).flat_map(move |a| (0..bm).map(move |b| (i * bn + a, j * bm + b, v * block[(a, b)])))
        });
        Self::from_triplets(self.nrows * bn, self.ncols * bm, triplets)
    }
}

fn is_zero(v: Complex64) -> bool {
    v.re == 0.0 && v.im == 0.0
}

fn compress_row(row: &mut Vec<(usize, Complex64)>) {
    row.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
    for &(j, v) in row.iter() {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|e| !is_zero(e.1));
    *row = out;
}

impl LinearOperator for SparseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.matvec(x)
    }

    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![Complex64::new(0.0, 0.0); self.ncols];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                y[j] += v.conj() * x[i];
            }
        }
        y
    }
}
