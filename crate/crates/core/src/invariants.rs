//! Bulk weak invariants: Chern numbers of the occupied bands on the three
//! coordinate planes of the Brillouin torus.

use std::f64::consts::{PI, TAU};

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eigh, Eigen, HermitianMatrix, LinalgError};
use crate::models::{HoppingModel, Plane};

/// Smallest allowed distance between μ and a Bloch eigenvalue.
pub const GAP_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("gap closes at k = {k:?}: eigenvalue {energy} within {GAP_TOL:e} of μ")]
    GapClosure { k: [f64; 3], energy: f64 },
    #[error("Chern integral on the {plane:?} plane is {distance:.3} from an integer at grids {grid} and {doubled}")]
    NoConvergence { plane: Plane, grid: usize, doubled: usize, distance: f64 },
    #[error("link overlap {overlap:.2e} is singular on a {grid}x{grid} grid; refine the grid")]
    SingularLink { grid: usize, overlap: f64 },
    #[error("grid must have at least 4 points per direction, got {0}")]
    GridTooSmall(usize),
    #[error("no occupied bands below μ = {0}")]
    Empty(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChernMethod {
    ChernWeil,
    LatticeGaugeInvariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernResult {
    pub plane: Plane,
    pub value_integral: f64,
    pub value_integer: i64,
    pub grid: usize,
    pub method: ChernMethod,
}

impl ChernResult {
    pub fn distance_to_integer(&self) -> f64 {
        (self.value_integral - self.value_integer as f64).abs()
    }
}

/// Weak Chern vector `(C_yz, C_zx, C_xy)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakVector(pub [i64; 3]);

impl WeakVector {
    pub fn yz(&self) -> i64 {
        self.0[0]
    }

    pub fn zx(&self) -> i64 {
        self.0[1]
    }

    pub fn xy(&self) -> i64 {
        self.0[2]
    }

    pub fn get(&self, plane: Plane) -> i64 {
        match plane {
            Plane::Yz => self.0[0],
            Plane::Zx => self.0[1],
            Plane::Xy => self.0[2],
        }
    }
}

fn checked_eigen(model: &HoppingModel, k: [f64; 3], mu: f64) -> Result<Eigen, InvariantError> {
    let e = eigh(&model.bloch(k))?;
    if let Some(&energy) = e.values.iter().find(|v| (*v - mu).abs() < GAP_TOL) {
        return Err(InvariantError::GapClosure { k, energy });
    }
    Ok(e)
}

fn occupied_frame(e: &Eigen, mu: f64) -> Mat<Complex64> {
    let m = e.values.iter().take_while(|v| **v < mu).count();
    Mat::from_fn(e.dim(), m, |i, j| e.vectors[(i, j)])
}

/// Spectral projection of the Bloch Hamiltonian onto energies below `mu`.
pub fn fermi_projection(model: &HoppingModel, k: [f64; 3], mu: f64) -> Result<HermitianMatrix, InvariantError> {
    let e = checked_eigen(model, k, mu)?;
    let v = occupied_frame(&e, mu);
    Ok(HermitianMatrix::new(&v * v.adjoint()))
}

fn plane_point(plane: Plane, a: f64, b: f64) -> [f64; 3] {
    let (first, second) = plane.axes();
    let mut k = [0.0; 3];
    k[first] = a;
    k[second] = b;
    k
}

fn grid_momentum(plane: Plane, n: usize, i: usize, j: usize) -> [f64; 3] {
    plane_point(plane, TAU * i as f64 / n as f64, TAU * j as f64 / n as f64)
}

fn trace(m: &Mat<Complex64>) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

fn chern_weil_once(model: &HoppingModel, plane: Plane, mu: f64, n: usize) -> Result<f64, InvariantError> {
    let projections = (0..n * n)
        .into_par_iter()
        .map(|idx| fermi_projection(model, grid_momentum(plane, n, idx / n, idx % n), mu).map(HermitianMatrix::into_mat))
        .collect::<Result<Vec<_>, _>>()?;
    let at = |i: usize, j: usize| &projections[(i % n) * n + (j % n)];
    let h = TAU / n as f64;
    let terms: Vec<Complex64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let diff = |a: &Mat<Complex64>, b: &Mat<Complex64>| {
                Mat::from_fn(a.nrows(), a.ncols(), |r, c| (a[(r, c)] - b[(r, c)]) / (2.0 * h))
            };
            let d1 = diff(at(i + 1, j), at(i + n - 1, j));
            let d2 = diff(at(i, j + 1), at(i, j + n - 1));
            let p = at(i, j);
            trace(&(p * (&d1 * &d2 - &d2 * &d1)))
        })
        .collect();
    let sum: Complex64 = terms.iter().sum();
    Ok((Complex64::new(0.0, 1.0 / TAU) * sum * h * h).re)
}

/// Chern number of the occupied bands from the curvature integral
/// `(i/2π) ∫ tr(P [∂₁P, ∂₂P]) d²k` over the plane's torus at zero transverse
/// momentum. The grid is doubled once if the integral is far from an integer.
pub fn chern_weil(model: &HoppingModel, plane: Plane, mu: f64, n: usize) -> Result<ChernResult, InvariantError> {
    if n < 4 {
        return Err(InvariantError::GridTooSmall(n));
    }
    let mut grid = n;
    loop {
        let value = chern_weil_once(model, plane, mu, grid)?;
        let result = ChernResult {
            plane,
            value_integral: value,
            value_integer: value.round() as i64,
            grid,
            method: ChernMethod::ChernWeil,
        };
        if result.distance_to_integer() < 0.25 {
            return Ok(result);
        }
        if grid > n {
            return Err(InvariantError::NoConvergence {
                plane,
                grid: n,
                doubled: grid,
                distance: result.distance_to_integer(),
            });
        }
        grid *= 2;
    }
}

/// Plaquette-flux Chern number. `gauge` multiplies each occupied eigenvector
/// by a phase; the result must not depend on it.
fn chern_lattice_gauged(
    model: &HoppingModel,
    plane: Plane,
    mu: f64,
    n: usize,
    gauge: &(dyn Fn(usize, usize) -> Complex64 + Sync),
) -> Result<ChernResult, InvariantError> {
    if n < 4 {
        return Err(InvariantError::GridTooSmall(n));
    }
    let frames = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let e = checked_eigen(model, grid_momentum(plane, n, idx / n, idx % n), mu)?;
            let mut v = occupied_frame(&e, mu);
            for b in 0..v.ncols() {
                let g = gauge(idx, b);
                v.col_mut(b).iter_mut().for_each(|c| *c *= g);
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>, InvariantError>>()?;
    if frames[0].ncols() == 0 {
        return Err(InvariantError::Empty(mu));
    }
    let at = |i: usize, j: usize| &frames[(i % n) * n + (j % n)];
    let link = |a: &Mat<Complex64>, b: &Mat<Complex64>| -> Result<Complex64, InvariantError> {
        let d = (a.adjoint() * b).determinant();
        if d.norm() < 1e-10 {
            return Err(InvariantError::SingularLink { grid: n, overlap: d.norm() });
        }
        Ok(d / d.norm())
    };
    let fluxes = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let u1 = link(at(i, j), at(i + 1, j))?;
            let u2 = link(at(i + 1, j), at(i + 1, j + 1))?;
            let u3 = link(at(i, j + 1), at(i + 1, j + 1))?;
            let u4 = link(at(i, j), at(i, j + 1))?;
            Ok((u1 * u2 * u3.conj() * u4.conj()).arg())
        })
        .collect::<Result<Vec<f64>, InvariantError>>()?;
    // orientation matched to the curvature integral
    let value = -fluxes.iter().sum::<f64>() / TAU;
    Ok(ChernResult {
        plane,
        value_integral: value,
        value_integer: value.round() as i64,
        grid: n,
        method: ChernMethod::LatticeGaugeInvariant,
    })
}

/// Gauge-invariant lattice Chern number from plaquette Berry fluxes.
pub fn chern_lattice(model: &HoppingModel, plane: Plane, mu: f64, n: usize) -> Result<ChernResult, InvariantError> {
    chern_lattice_gauged(model, plane, mu, n, &|_, _| Complex64::new(1.0, 0.0))
}

pub fn weak_vector(model: &HoppingModel, mu: f64, n: usize) -> Result<WeakVector, InvariantError> {
    let mut out = [0; 3];
    for (slot, plane) in out.iter_mut().zip(Plane::ALL) {
        *slot = chern_lattice(model, plane, mu, n)?.value_integer;
    }
    Ok(WeakVector(out))
}

/// Highest Bloch energy below `mu` and lowest above it, sampled on an
/// `n × n × n` grid including the high-symmetry points.
pub fn bulk_gap(model: &HoppingModel, mu: f64, n: usize) -> Result<(f64, f64), InvariantError> {
    let n = n.max(2);
    let pts: Vec<[f64; 3]> = (0..n * n * n)
        .map(|idx| {
            let c = |i: usize| -PI + TAU * i as f64 / n as f64;
            [c(idx / (n * n)), c((idx / n) % n), c(idx % n)]
        })
        .collect();
    let edges = pts
        .par_iter()
        .map(|&k| {
            let e = checked_eigen(model, k, mu)?;
            let below = e.values.iter().copied().filter(|v| *v < mu).fold(f64::NEG_INFINITY, f64::max);
            let above = e.values.iter().copied().filter(|v| *v > mu).fold(f64::INFINITY, f64::min);
            Ok((below, above))
        })
        .collect::<Result<Vec<_>, InvariantError>>()?;
    Ok(edges.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), &(b, a)| (lo.max(b), hi.min(a))))
}
