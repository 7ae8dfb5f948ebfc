//! Dense Hermitian eigendecomposition, functional calculus and operator norms.
//!
//! The eigensolver itself is delegated to `faer` (Householder tridiagonalization
//! followed by an implicit-shift tridiagonal solve), always run sequentially so
//! that callers can parallelize across matrices.

mod sparse;

use faer::{Mat, Side};
use num_complex::Complex64;
use thiserror::Error;

pub use sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("eigensolver did not converge on a {dimension}x{dimension} matrix")]
    NoConvergence { dimension: usize },
    #[error("empty matrix")]
    Empty,
}

/// Square complex matrix that is exactly Hermitian.
///
/// Construction averages the input with its adjoint, then mirrors the lower
/// triangle into the upper one, so `a[(i, j)] == a[(j, i)].conj()` holds
/// bit-for-bit and the diagonal is real.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    data: Mat<Complex64>,
}

impl HermitianMatrix {
    pub fn new(mut data: Mat<Complex64>) -> Self {
        assert_eq!(data.nrows(), data.ncols(), "Hermitian matrix must be square");
        let n = data.nrows();
        for j in 0..n {
            data[(j, j)] = Complex64::new(data[(j, j)].re, 0.0);
            for i in j + 1..n {
                let v = (data[(i, j)] + data[(j, i)].conj()) * 0.5;
                data[(i, j)] = v;
                data[(j, i)] = v.conj();
            }
        }
        Self { data }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self::new(Mat::from_fn(n, n, f))
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: Mat::zeros(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_mat(&self) -> &Mat<Complex64> {
        &self.data
    }

    pub fn into_mat(self) -> Mat<Complex64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    /// Largest `|a_ij - conj(a_ji)|`; zero by construction.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.data)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)].re).sum()
    }
}

pub fn hermiticity_defect(m: &Mat<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors as
/// columns.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Mat<Complex64>,
}

impl Eigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> &[Complex64] {
        self.vectors.col_as_slice(k)
    }

    /// `V f(Λ) Vᴴ`.
    pub fn apply(&self, f: impl Fn(f64) -> Complex64) -> Mat<Complex64> {
        let n = self.dim();
        let fv: Vec<Complex64> = self.values.iter().map(|&e| f(e)).collect();
        let scaled = Mat::from_fn(n, n, |i, k| self.vectors[(i, k)] * fv[k]);
        &scaled * self.vectors.adjoint()
    }
}

pub fn eigh(a: &HermitianMatrix) -> Result<Eigen, LinalgError> {
    let n = a.dim();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    let evd = a
        .data
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LinalgError::NoConvergence { dimension: n })?;
    let raw: Vec<f64> = evd.S().column_vector().iter().map(|v| v.re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw[i].total_cmp(&raw[j]));
    let u = evd.U();
    let values = order.iter().map(|&k| raw[k]).collect();
    let vectors = Mat::from_fn(n, n, |i, k| u[(i, order[k])]);
    Ok(Eigen { values, vectors })
}

pub fn func_calc(a: &HermitianMatrix, f: impl Fn(f64) -> Complex64) -> Result<Mat<Complex64>, LinalgError> {
    Ok(eigh(a)?.apply(f))
}

/// Anything that can be applied to vectors together with its adjoint.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64>;
}

impl LinearOperator for Mat<Complex64> {
    fn nrows(&self) -> usize {
        Mat::nrows(self)
    }

    fn ncols(&self) -> usize {
        Mat::ncols(self)
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); Mat::nrows(self)];
        for (j, &xj) in x.iter().enumerate() {
            for (yi, &a) in y.iter_mut().zip(self.col_as_slice(j)) {
                *yi += a * xj;
            }
        }
        y
    }

    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..Mat::ncols(self))
            .map(|j| self.col_as_slice(j).iter().zip(x).map(|(a, xi)| a.conj() * xi).sum())
            .collect()
    }
}

impl LinearOperator for HermitianMatrix {
    fn nrows(&self) -> usize {
        self.dim()
    }

    fn ncols(&self) -> usize {
        self.dim()
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data.apply(x)
    }

    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.data.apply(x)
    }
}

const OPNORM_RTOL: f64 = 1e-8;
const OPNORM_MAX_ITER: usize = 20_000;

/// Largest singular value by power iteration on `AᴴA`.
///
/// The start vector is fixed, so the result is deterministic.
pub fn opnorm<A: LinearOperator + ?Sized>(a: &A) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut x: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64;
            Complex64::new(1.0 + 0.37 * (1.3 * t).sin(), 0.21 * (0.7 * t).cos())
        })
        .collect();
    normalize(&mut x);
    let mut sigma_sq = 0.0;
    for _ in 0..OPNORM_MAX_ITER {
        let y = a.apply_adjoint(&a.apply(&x));
        let next = norm2(&y);
        if next == 0.0 {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / next).collect();
        let converged = (next - sigma_sq).abs() <= OPNORM_RTOL * next;
        sigma_sq = next;
        if converged {
            break;
        }
    }
    sigma_sq.sqrt()
}

pub fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(x: &mut [Complex64]) {
    let n = norm2(x);
    x.iter_mut().for_each(|v| *v /= n);
}

/// Largest entry modulus of `UᴴU − 𝟙`.
pub fn unitarity_defect(u: &Mat<Complex64>) -> f64 {
    let g = u.adjoint() * u;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Largest entry modulus of `A − B`.
pub fn max_abs_diff(a: &Mat<Complex64>, b: &Mat<Complex64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HermitianMatrix::from_fn(n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn residual(a: &HermitianMatrix, e: &Eigen) -> f64 {
        let av = a.as_mat() * &e.vectors;
        let n = a.dim();
        let vl = Mat::from_fn(n, n, |i, k| e.vectors[(i, k)] * e.values[k]);
        max_abs_diff(&av, &vl)
    }

    #[test]
    fn diagonal_sorted() {
        let a = HermitianMatrix::from_fn(3, |i, j| if i == j { c([3.0, 1.0, 2.0][i], 0.0) } else { c(0.0, 0.0) });
        let e = eigh(&a).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pauli_x() {
        let a = HermitianMatrix::from_fn(2, |i, j| if i != j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let e = eigh(&a).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
        let v = e.vector(0);
        // (1, -1)/√2 up to a phase
        assert!((v[0] + v[1]).norm() < 1e-14);
        assert!((v[0].norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn random_200_reconstruction() {
        let a = random_hermitian(200, 7);
        let e = eigh(&a).unwrap();
        let scale = opnorm(&a);
        assert!(residual(&a, &e) <= 1e-10 * scale);
        assert!(unitarity_defect(&e.vectors) <= 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn trace_invariance() {
        let a = random_hermitian(60, 3);
        let e = eigh(&a).unwrap();
        let sum: f64 = e.values.iter().sum();
        assert!((sum - a.trace()).abs() <= 1e-10 * 60.0);
    }

    #[test]
    fn deterministic() {
        let a = random_hermitian(40, 11);
        let e1 = eigh(&a).unwrap();
        let e2 = eigh(&a).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }

    #[test]
    fn construction_is_exactly_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = Mat::from_fn(17, 17, |_, _| c(rng.gen(), rng.gen()));
        let h = HermitianMatrix::new(raw);
        assert_eq!(h.hermiticity_defect(), 0.0);
    }

    #[test]
    fn func_calc_identity_constant_square() {
        let a = random_hermitian(30, 5);
        let id = func_calc(&a, |x| c(x, 0.0)).unwrap();
        assert!(max_abs_diff(&id, a.as_mat()) < 1e-12);
        let one = func_calc(&a, |_| c(1.0, 0.0)).unwrap();
        assert!(max_abs_diff(&one, &Mat::identity(30, 30)) < 1e-12);
        let sq = func_calc(&a, |x| c(x * x, 0.0)).unwrap();
        let direct = a.as_mat() * a.as_mat();
        assert!(max_abs_diff(&sq, &direct) < 1e-10);
    }

    #[test]
    fn opnorm_examples() {
        let id = HermitianMatrix::from_fn(5, |i, j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!((opnorm(&id) - 1.0).abs() < 1e-12);
        let d = HermitianMatrix::from_fn(2, |i, j| if i == j && i == 1 { c(-5.0, 0.0) } else { c(0.0, 0.0) });
        assert!((opnorm(&d) - 5.0).abs() < 1e-8 * 5.0);
    }

    #[test]
    fn opnorm_matches_extreme_eigenvalue() {
        let a = random_hermitian(50, 9);
        let e = eigh(&a).unwrap();
        let expect = e.values[0].abs().max(e.values[49].abs());
        assert!((opnorm(&a) - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn opnorm_of_unitary_is_one() {
        let a = random_hermitian(40, 21);
        let u = func_calc(&a, |x| Complex64::from_polar(1.0, x)).unwrap();
        assert!((opnorm(&u) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sparse_and_dense_norms_agree() {
        let s = SparseMatrix::from_triplets(3, 3, [(0, 1, c(2.0, 0.0)), (2, 0, c(0.0, 1.0))]);
        assert!((opnorm(&s) - opnorm(&s.to_dense())).abs() < 1e-10);
        assert!((opnorm(&s) - 2.0).abs() < 1e-8);
    }

    // closed-form roots for 2x2 and 3x3 Hermitian matrices
    fn roots_2x2(a: f64, d: f64, b: Complex64) -> [f64; 2] {
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
        [m - r, m + r]
    }

    fn roots_3x3(m: &HermitianMatrix) -> [f64; 3] {
        // trigonometric solution of the depressed characteristic cubic
        let q = m.trace() / 3.0;
        let a = |i: usize, j: usize| m.get(i, j);
        let off = a(0, 1).norm_sqr() + a(0, 2).norm_sqr() + a(1, 2).norm_sqr();
        let p2 = (a(0, 0).re - q).powi(2) + (a(1, 1).re - q).powi(2) + (a(2, 2).re - q).powi(2) + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return [q; 3];
        }
        let b = HermitianMatrix::from_fn(3, |i, j| {
            let id = if i == j { q } else { 0.0 };
            (a(i, j) - id) / p
        });
        let det = {
            let g = |i, j| b.get(i, j);
            g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
        };
        let r = (det.re / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let tau = std::f64::consts::TAU;
        let mut out = [
            q + 2.0 * p * phi.cos(),
            q + 2.0 * p * (phi + tau / 3.0).cos(),
            q + 2.0 * p * (phi + 2.0 * tau / 3.0).cos(),
        ];
        out.sort_by(f64::total_cmp);
        out
    }

    proptest! {
        #[test]
        fn two_by_two_matches_closed_form(a in -5.0..5.0f64, d in -5.0..5.0f64, br in -3.0..3.0f64, bi in -3.0..3.0f64) {
            let b = c(br, bi);
            let m = HermitianMatrix::from_fn(2, |i, j| match (i, j) {
                (0, 0) => c(a, 0.0),
                (1, 1) => c(d, 0.0),
                (1, 0) => b,
                _ => b.conj(),
            });
            let e = eigh(&m).unwrap();
            let r = roots_2x2(a, d, b);
            prop_assert!((e.values[0] - r[0]).abs() < 1e-12 * (1.0 + r[0].abs()));
            prop_assert!((e.values[1] - r[1]).abs() < 1e-12 * (1.0 + r[1].abs()));
        }

        #[test]
        fn three_by_three_matches_closed_form(seed in 0u64..10_000) {
            let m = random_hermitian(3, seed);
            let e = eigh(&m).unwrap();
            let r = roots_3x3(&m);
            for k in 0..3 {
                prop_assert!((e.values[k] - r[k]).abs() < 1e-12 * 4.0, "{:?} vs {:?}", e.values, r);
            }
        }
    }
}
