//! Dislocated shift operators and site projections at fixed layer momentum.
//!
//! Operators are first built in a momentum-free form, [`LaurentOperator`],
//! whose entries are Laurent polynomials in `w = e^{i kz}`: a hop that lowers
//! the layer index by one carries `w⁻¹`. Evaluating at a given `kz` gives a
//! [`MomentumOperator`]; differentiating the polynomial gives exact
//! `kz`-derivatives.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{Boundary, DislocatedLattice};
use crate::linalg::{opnorm, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("commutator check needs an open lattice with half width at least 3, got {0}")]
    LatticeTooSmall(i64),
    #[error("commutator check is defined on the open single-core lattice only")]
    NotOpen,
}

/// `e^{i q kz}` with `kz` reduced to `[0, 2π)`; negative powers are exact
/// conjugates of positive ones.
pub fn phase(q: i64, kz: f64) -> Complex64 {
    let theta = kz.rem_euclid(TAU);
    let p = Complex64::cis(q.unsigned_abs() as f64 * theta);
    if q < 0 {
        p.conj()
    } else {
        p
    }
}

fn czero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Sparse square matrix whose entries are Laurent polynomials in `e^{i kz}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentOperator {
    n: usize,
    rows: Vec<Vec<(usize, i64, Complex64)>>,
}

impl LaurentOperator {
    pub fn zeros(n: usize) -> Self {
        Self { n, rows: vec![Vec::new(); n] }
    }

    pub fn identity(n: usize) -> Self {
        Self { n, rows: (0..n).map(|i| vec![(i, 0, Complex64::new(1.0, 0.0))]).collect() }
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (usize, usize, i64, Complex64)>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for (i, j, q, c) in terms {
            rows[i].push((j, q, c));
        }
        for row in &mut rows {
            compress(row);
        }
        Self { n, rows }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, i64, Complex64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| row.iter().map(move |&(j, q, c)| (i, j, q, c)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut out = Vec::new();
                for &(k, q1, c1) in row {
                    out.extend(other.rows[k].iter().map(|&(j, q2, c2)| (j, q1 + q2, c1 * c2)));
                }
                compress(&mut out);
                out
            })
            .collect();
        Self { n: self.n, rows }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_terms(self.n, self.terms().map(|(i, j, q, c)| (j, i, -q, c.conj())))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_terms(self.n, self.terms().chain(other.terms()))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_terms(self.n, self.terms().map(|(i, j, q, c)| (i, j, q, c * s)))
    }

    /// Multiplies every term by `w^q`.
    pub fn shift_power(&self, q: i64) -> Self {
        Self { n: self.n, rows: self.rows.iter().map(|r| r.iter().map(|&(j, p, c)| (j, p + q, c)).collect()).collect() }
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::identity(self.n), |acc, _| acc.mul(self))
    }

    pub fn evaluate(&self, kz: f64) -> SparseMatrix {
        SparseMatrix::from_triplets(self.n, self.n, self.terms().map(|(i, j, q, c)| (i, j, c * phase(q, kz))))
    }

    /// Exact derivative with respect to `kz`.
    pub fn derivative(&self, kz: f64) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.n,
            self.n,
            self.terms().map(|(i, j, q, c)| (i, j, c * phase(q, kz) * Complex64::new(0.0, q as f64))),
        )
    }
}

fn compress(row: &mut Vec<(usize, i64, Complex64)>) {
    row.sort_by_key(|&(j, q, _)| (j, q));
    let mut out: Vec<(usize, i64, Complex64)> = Vec::with_capacity(row.len());
    for &(j, q, c) in row.iter() {
        match out.last_mut() {
            Some(last) if last.0 == j && last.1 == q => last.2 += c,
            _ => out.push((j, q, c)),
        }
    }
    out.retain(|t| t.2 != czero());
    *row = out;
}

/// `+x` shift in momentum-free form.
pub fn shift_x_laurent(lattice: &DislocatedLattice) -> LaurentOperator {
    let terms = (0..lattice.len())
        .filter_map(|i| lattice.neighbor(i, 1, 0).map(|j| (j, i, 0, Complex64::new(1.0, 0.0))));
    LaurentOperator::from_terms(lattice.len(), terms)
}

/// `+y` shift in momentum-free form; cut bonds lower the layer index.
pub fn shift_y_laurent(lattice: &DislocatedLattice) -> LaurentOperator {
    let terms = (0..lattice.len()).filter_map(|i| {
        lattice.neighbor(i, 0, 1).map(|j| (j, i, -lattice.cut_crossing(i, j), Complex64::new(1.0, 0.0)))
    });
    LaurentOperator::from_terms(lattice.len(), terms)
}

/// `+y` shift ignoring the dislocation.
pub fn flat_shift_y_laurent(lattice: &DislocatedLattice) -> LaurentOperator {
    let terms = (0..lattice.len())
        .filter_map(|i| lattice.neighbor(i, 0, 1).map(|j| (j, i, 0, Complex64::new(1.0, 0.0))));
    LaurentOperator::from_terms(lattice.len(), terms)
}

/// Scalar operator on the site basis of a lattice at a fixed `kz`.
#[derive(Clone, Debug)]
pub struct MomentumOperator<'a> {
    lattice: &'a DislocatedLattice,
    kz: f64,
    matrix: SparseMatrix,
}

impl<'a> MomentumOperator<'a> {
    pub fn new(lattice: &'a DislocatedLattice, kz: f64, matrix: SparseMatrix) -> Self {
        assert_eq!(matrix.nrows(), lattice.len());
        assert_eq!(matrix.ncols(), lattice.len());
        Self { lattice, kz: kz.rem_euclid(TAU), matrix }
    }

    pub fn identity(lattice: &'a DislocatedLattice, kz: f64) -> Self {
        Self::new(lattice, kz, SparseMatrix::identity(lattice.len()))
    }

    /// Relabels the momentum of a `kz`-independent operator such as a site
    /// projection.
    pub fn with_kz(mut self, kz: f64) -> Self {
        self.kz = kz.rem_euclid(TAU);
        self
    }

    pub fn lattice(&self) -> &'a DislocatedLattice {
        self.lattice
    }

    pub fn kz(&self) -> f64 {
        self.kz
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SparseMatrix {
        self.matrix
    }

    fn check_compatible(&self, other: &Self) {
        assert!(std::ptr::eq(self.lattice, other.lattice), "operators live on different lattices");
        assert!(self.kz == other.kz, "operators live at different kz");
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check_compatible(other);
        Self { lattice: self.lattice, kz: self.kz, matrix: self.matrix.mul(&other.matrix) }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_compatible(other);
        Self { lattice: self.lattice, kz: self.kz, matrix: self.matrix.add(&other.matrix) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_compatible(other);
        Self { lattice: self.lattice, kz: self.kz, matrix: self.matrix.sub(&other.matrix) }
    }

    pub fn adjoint(&self) -> Self {
        Self { lattice: self.lattice, kz: self.kz, matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { lattice: self.lattice, kz: self.kz, matrix: self.matrix.scale(s) }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Sites touched (as row or column) by an entry above `tol`.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        let mut touched = vec![false; self.lattice.len()];
        for (i, j, v) in self.matrix.triplets() {
            if v.norm() > tol {
                touched[i] = true;
                touched[j] = true;
            }
        }
        touched.iter().enumerate().filter_map(|(i, &t)| t.then_some(i)).collect()
    }

    /// Sparse triplets `row,col,re,im` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,re,im\n");
        for (i, j, v) in self.matrix.triplets() {
            writeln!(out, "{i},{j},{:e},{:e}", v.re, v.im).expect("writing to a String");
        }
        out
    }
}

pub fn shift_x(lattice: &DislocatedLattice, kz: f64) -> MomentumOperator<'_> {
    MomentumOperator::new(lattice, kz, shift_x_laurent(lattice).evaluate(kz))
}

pub fn shift_y(lattice: &DislocatedLattice, kz: f64) -> MomentumOperator<'_> {
    MomentumOperator::new(lattice, kz, shift_y_laurent(lattice).evaluate(kz))
}

pub fn flat_shift_y(lattice: &DislocatedLattice, kz: f64) -> MomentumOperator<'_> {
    MomentumOperator::new(lattice, kz, flat_shift_y_laurent(lattice).evaluate(kz))
}

fn diagonal_projection(lattice: &DislocatedLattice, keep: impl Fn(usize) -> bool) -> MomentumOperator<'_> {
    let diag = (0..lattice.len()).map(|i| Complex64::new(if keep(i) { 1.0 } else { 0.0 }, 0.0));
    MomentumOperator::new(lattice, 0.0, SparseMatrix::from_diagonal(diag))
}

/// Projection onto the tails of the cut bonds.
pub fn cut_projection(lattice: &DislocatedLattice) -> MomentumOperator<'_> {
    diagonal_projection(lattice, |i| lattice.is_cut_from(i))
}

/// Projection onto sites within `rho` of any core.
pub fn core_projection(lattice: &DislocatedLattice, rho: f64) -> MomentumOperator<'_> {
    diagonal_projection(lattice, |i| lattice.axis_distance(i) <= rho)
}

/// Projection onto sites within `rho` of one particular core.
pub fn core_projection_at(lattice: &DislocatedLattice, core: usize, rho: f64) -> MomentumOperator<'_> {
    diagonal_projection(lattice, |i| lattice.core_distance(i, core) <= rho)
}

/// Projection onto sites farther than `radius` from every core.
pub fn ring_projection(lattice: &DislocatedLattice, radius: f64) -> MomentumOperator<'_> {
    diagonal_projection(lattice, |i| lattice.axis_distance(i) > radius)
}

/// Largest lattice distance between two sites coupled by a non-zero entry.
pub fn propagation(op: &MomentumOperator<'_>) -> f64 {
    let lattice = op.lattice();
    op.matrix().triplets().map(|(i, j, _)| lattice.lattice_distance(i, j)).max().unwrap_or(0) as f64
}

/// Rank of a diagonal 0/1 projection.
pub fn projection_rank(p: &MomentumOperator<'_>) -> usize {
    p.matrix().triplets().filter(|&(i, j, v)| i == j && v.re > 0.5).count()
}

/// Norm of `[S̃x, S̃y] − (e^{−ikz} − 1)·|(0,1)⟩⟨(−1,0)|` on sites more than two
/// steps inside an open box.
pub fn commutator_check(lattice: &DislocatedLattice, kz: f64) -> Result<f64, OperatorError> {
    if lattice.boundary() != Boundary::Open {
        return Err(OperatorError::NotOpen);
    }
    if lattice.half_width() < 3 {
        return Err(OperatorError::LatticeTooSmall(lattice.half_width()));
    }
    let comm = shift_x(lattice, kz).commutator(&shift_y(lattice, kz));
    let closed = axis_commutator(lattice, kz);
    let interior = |i: usize| lattice.boundary_depth(i) > 2;
    let diff = comm.sub(&closed);
    let restricted = SparseMatrix::from_triplets(
        lattice.len(),
        lattice.len(),
        diff.matrix().triplets().filter(|&(i, j, _)| interior(i) && interior(j)),
    );
    Ok(opnorm(&restricted))
}

/// Closed form of the commutator: the hop `(−1,0) → (0,1)` weighted by
/// `e^{−ikz} − 1`.
pub fn axis_commutator(lattice: &DislocatedLattice, kz: f64) -> MomentumOperator<'_> {
    let mut triplets = Vec::new();
    if let (Some(from), Some(to)) = (lattice.index_of(-1, 0), lattice.index_of(0, 1)) {
        triplets.push((to, from, phase(-1, kz) - Complex64::new(1.0, 0.0)));
    }
    MomentumOperator::new(lattice, kz, SparseMatrix::from_triplets(lattice.len(), lattice.len(), triplets))
}

/// Largest distance from the cores of any site where `op` fails to commute
/// with the dislocated shifts, ignoring sites within `op`'s propagation plus
/// one of an open boundary. Returns 0 if it commutes everywhere.
pub fn translation_defect_radius(op: &MomentumOperator<'_>, tol: f64) -> f64 {
    let lattice = op.lattice();
    let margin = propagation(op) as i64 + 2;
    let sx = shift_x(lattice, op.kz());
    let sy = shift_y(lattice, op.kz());
    [op.commutator(&sx), op.commutator(&sy)]
        .iter()
        .flat_map(|c| c.support(tol))
        .filter(|&i| lattice.boundary_depth(i) > margin)
        .map(|i| lattice.axis_distance(i))
        .fold(0.0, f64::max)
}
