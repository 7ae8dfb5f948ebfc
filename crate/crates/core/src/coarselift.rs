//! Lifting finite-propagation kernels on the flat square lattice to the
//! dislocated lattice by copying entries between nearby points of the
//! covering, with the norm bound and multiplicativity up to axis-supported
//! corrections.

use std::collections::{HashMap, VecDeque};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::DislocatedLattice;
use crate::linalg::{opnorm, SparseMatrix};
use crate::operators::{phase, MomentumOperator};

/// Entries below this magnitude count as zero in support queries.
pub const SUPPORT_TOL: f64 = 1e-12;
/// Allowed excess of the defect radius over `R + S`.
pub const DEFECT_SLACK: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoarseLiftError {
    #[error("kernel box half width {kernel} does not match lattice half width {lattice}")]
    BoxMismatch { kernel: i64, lattice: i64 },
    #[error("kernel lift needs an open lattice without core removal")]
    UnsupportedLattice,
    #[error("entry between {from:?} and {to:?} exceeds the propagation {propagation}")]
    OutsidePropagation { from: (i64, i64), to: (i64, i64), propagation: f64 },
    #[error("propagation {0} must be finite and non-negative")]
    BadPropagation(f64),
    #[error("combined propagation {total} must stay below the half width {half_width}")]
    TooWide { total: f64, half_width: i64 },
}

/// Operator on the sites `|x|, |y| ≤ half_width` of ℤ² whose entries vanish
/// between sites farther apart than `propagation` in the ℓ¹ metric.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatKernel {
    half_width: i64,
    propagation: f64,
    matrix: SparseMatrix,
}

impl FlatKernel {
    fn side(half_width: i64) -> usize {
        (2 * half_width + 1) as usize
    }

    pub fn index(&self, site: (i64, i64)) -> Option<usize> {
        let l = self.half_width;
        (site.0.abs() <= l && site.1.abs() <= l).then(|| ((site.0 + l) as usize) * Self::side(l) + (site.1 + l) as usize)
    }

    pub fn site(&self, idx: usize) -> (i64, i64) {
        let s = Self::side(self.half_width);
        ((idx / s) as i64 - self.half_width, (idx % s) as i64 - self.half_width)
    }

    pub fn len(&self) -> usize {
        Self::side(self.half_width).pow(2)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `entries` lists `(to, from, value)`; duplicates are summed.
    pub fn new(
        half_width: i64,
        propagation: f64,
        entries: impl IntoIterator<Item = ((i64, i64), (i64, i64), Complex64)>,
    ) -> Result<Self, CoarseLiftError> {
        if !(propagation.is_finite() && propagation >= 0.0) {
            return Err(CoarseLiftError::BadPropagation(propagation));
        }
        let mut kernel = Self { half_width, propagation, matrix: SparseMatrix::zeros(0, 0) };
        let mut triplets = Vec::new();
        for (to, from, v) in entries {
            if ((to.0 - from.0).abs() + (to.1 - from.1).abs()) as f64 > propagation {
                return Err(CoarseLiftError::OutsidePropagation { from, to, propagation });
            }
            if let (Some(i), Some(j)) = (kernel.index(to), kernel.index(from)) {
                triplets.push((i, j, v));
            }
        }
        kernel.matrix = SparseMatrix::from_triplets(kernel.len(), kernel.len(), triplets);
        Ok(kernel)
    }

    pub fn identity(half_width: i64) -> Self {
        let side = Self::side(half_width);
        Self { half_width, propagation: 0.0, matrix: SparseMatrix::identity(side * side) }
    }

    /// Translation by `(dx, dy)`, truncated to the box.
    pub fn translation(half_width: i64, dx: i64, dy: i64) -> Self {
        let l = half_width;
        let entries = (-l..=l)
            .flat_map(|x| (-l..=l).map(move |y| (x, y)))
            .map(|(x, y)| ((x + dx, y + dy), (x, y), Complex64::new(1.0, 0.0)));
        Self::new(half_width, (dx.abs() + dy.abs()) as f64, entries).expect("translation is within its propagation")
    }

    pub fn shift_x(half_width: i64) -> Self {
        Self::translation(half_width, 1, 0)
    }

    pub fn shift_y(half_width: i64) -> Self {
        Self::translation(half_width, 0, 1)
    }

    /// Independent uniform complex entries in the unit square for every pair
    /// within `propagation`.
    pub fn random(half_width: i64, propagation: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reach = propagation.floor() as i64;
        let l = half_width;
        let mut entries = Vec::new();
        for x in -l..=l {
            for y in -l..=l {
                for dx in -reach..=reach {
                    for dy in -(reach - dx.abs())..=(reach - dx.abs()) {
                        let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        entries.push(((x + dx, y + dy), (x, y), v));
                    }
                }
            }
        }
        Self::new(half_width, propagation, entries).expect("random kernel is within its propagation")
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    pub fn propagation(&self) -> f64 {
        self.propagation
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Entry `k(to, from)`.
    pub fn entry(&self, to: (i64, i64), from: (i64, i64)) -> Complex64 {
        match (self.index(to), self.index(from)) {
            (Some(i), Some(j)) => self.matrix.get(i, j),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self { half_width: self.half_width, propagation: self.propagation, matrix: self.matrix.adjoint() }
    }

    /// Composition with propagation budget `R + S`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.half_width, other.half_width, "kernels on different boxes");
        Self {
            half_width: self.half_width,
            propagation: self.propagation + other.propagation,
            matrix: self.matrix.mul(&other.matrix),
        }
    }

    /// Copy with every entry touching a site accepted by `drop` removed.
    pub fn without_sites(&self, drop: impl Fn((i64, i64)) -> bool) -> Self {
        let triplets = self
            .matrix
            .triplets()
            .filter(|&(i, j, _)| !drop(self.site(i)) && !drop(self.site(j)))
            .collect::<Vec<_>>();
        Self {
            half_width: self.half_width,
            propagation: self.propagation,
            matrix: SparseMatrix::from_triplets(self.len(), self.len(), triplets),
        }
    }

    pub fn norm(&self) -> f64 {
        opnorm(&self.matrix)
    }
}

/// Points of the covering within graph distance `radius` of `(source, layer 0)`,
/// as `(site, layer)` pairs. A bond that crosses the cut in `+y` lowers the layer.
fn covering_ball(lattice: &DislocatedLattice, source: usize, radius: i64) -> Vec<(usize, i64)> {
    let mut seen: HashMap<(usize, i64), i64> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert((source, 0), 0);
    queue.push_back((source, 0i64, 0i64));
    while let Some((site, layer, d)) = queue.pop_front() {
        if d == radius {
            continue;
        }
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(next) = lattice.neighbor(site, dx, dy) {
                let key = (next, layer - lattice.cut_crossing(site, next));
                if let std::collections::hash_map::Entry::Vacant(slot) = seen.entry(key) {
                    slot.insert(d + 1);
                    queue.push_back((key.0, key.1, d + 1));
                }
            }
        }
    }
    let mut ball: Vec<(usize, i64)> = seen.into_keys().collect();
    ball.sort_unstable();
    ball
}

fn check_lattice(kernel: &FlatKernel, lattice: &DislocatedLattice) -> Result<(), CoarseLiftError> {
    if lattice.is_periodic() || lattice.core_removal_radius() > 0.0 {
        return Err(CoarseLiftError::UnsupportedLattice);
    }
    if kernel.half_width != lattice.half_width() {
        return Err(CoarseLiftError::BoxMismatch { kernel: kernel.half_width, lattice: lattice.half_width() });
    }
    Ok(())
}

/// Lift at layer momentum `kz`: the entry from `a` to `b` sums
/// `k(b, a) e^{i l kz}` over every lift of `b` at layer `l` within covering
/// distance `R` of `a` at layer 0.
pub fn lift<'a>(
    kernel: &FlatKernel,
    lattice: &'a DislocatedLattice,
    kz: f64,
) -> Result<MomentumOperator<'a>, CoarseLiftError> {
    check_lattice(kernel, lattice)?;
    let radius = kernel.propagation.floor() as i64;
    let mut triplets = Vec::new();
    for a in 0..lattice.len() {
        let from = lattice.site(a);
        for (b, layer) in covering_ball(lattice, a, radius) {
            let k = kernel.entry(lattice.site(b), from);
            if k != Complex64::new(0.0, 0.0) {
                triplets.push((b, a, k * phase(layer, kz)));
            }
        }
    }
    Ok(MomentumOperator::new(lattice, kz, SparseMatrix::from_triplets(lattice.len(), lattice.len(), triplets)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBound {
    pub lifted: f64,
    pub flat: f64,
    pub bound: f64,
}

impl NormBound {
    pub fn holds(&self) -> bool {
        self.lifted <= self.bound * (1.0 + 1e-8)
    }
}

/// `‖lift(K)‖` against `(2⌈R⌉ + 1)² ‖K‖`.
pub fn norm_bound_check(
    kernel: &FlatKernel,
    lattice: &DislocatedLattice,
    kz: f64,
) -> Result<NormBound, CoarseLiftError> {
    let lifted = opnorm(lift(kernel, lattice, kz)?.matrix());
    let flat = kernel.norm();
    let terms = (2.0 * kernel.propagation.ceil() + 1.0).powi(2);
    Ok(NormBound { lifted, flat, bound: terms * flat })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    /// Largest entry of `lift(K) lift(L) - lift(KL)`.
    pub max_entry: f64,
    /// Largest axis distance of a site touched by a non-zero defect entry.
    pub radius: f64,
    /// `R + S`.
    pub budget: f64,
}

impl Defect {
    pub fn within_slack(&self) -> bool {
        self.radius <= self.budget + DEFECT_SLACK
    }
}

pub fn multiplicativity_defect(
    k: &FlatKernel,
    l: &FlatKernel,
    lattice: &DislocatedLattice,
    kz: f64,
) -> Result<Defect, CoarseLiftError> {
    let budget = k.propagation + l.propagation;
    if budget >= lattice.half_width() as f64 {
        return Err(CoarseLiftError::TooWide { total: budget, half_width: lattice.half_width() });
    }
    let product = lift(k, lattice, kz)?.mul(&lift(l, lattice, kz)?);
    let direct = lift(&k.compose(l), lattice, kz)?;
    let defect = product.sub(&direct);
    let max_entry = defect.matrix().max_abs();
    let radius = defect.support(SUPPORT_TOL).into_iter().map(|s| lattice.axis_distance(s)).fold(0.0, f64::max);
    Ok(Defect { max_entry, radius, budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, Boundary, BurgersFrame};
    use crate::operators::{shift_x, shift_y};

    fn open(l: i64) -> DislocatedLattice {
        build_lattice(l, Boundary::Open, 0.0, BurgersFrame::identity()).unwrap()
    }

    #[test]
    fn identity_lifts_to_identity() {
        let lat = open(5);
        let id = lift(&FlatKernel::identity(5), &lat, 1.3).unwrap();
        assert_eq!(id.matrix(), &SparseMatrix::identity(lat.len()));
        let nb = norm_bound_check(&FlatKernel::identity(5), &lat, 1.3).unwrap();
        assert!((nb.lifted - 1.0).abs() < 1e-8 && (nb.bound - 1.0).abs() < 1e-8);
    }

    #[test]
    fn x_shift_lifts_exactly() {
        let lat = open(5);
        for kz in [0.0, 0.7, 3.0] {
            let lifted = lift(&FlatKernel::shift_x(5), &lat, kz).unwrap();
            assert_eq!(lifted.matrix(), shift_x(&lat, kz).matrix());
        }
        let nb = norm_bound_check(&FlatKernel::shift_x(5), &lat, 0.7).unwrap();
        assert!((nb.lifted - nb.flat).abs() < 1e-8 && nb.holds());
        assert!((nb.bound - 9.0 * nb.flat).abs() < 1e-12);
    }

    #[test]
    fn y_shift_lift_matches_cut_phases() {
        // a unit step has a unique covering lift, so the cut phases are reproduced
        let lat = open(5);
        let kz = 2.1;
        let lifted = lift(&FlatKernel::shift_y(5), &lat, kz).unwrap();
        let direct = shift_y(&lat, kz);
        assert!(lifted.sub(&direct).matrix().max_abs() < 1e-15);
    }

    #[test]
    fn lift_is_star_preserving() {
        let lat = open(6);
        let k = FlatKernel::random(6, 2.0, 11);
        let a = lift(&k.adjoint(), &lat, 0.9).unwrap();
        let b = lift(&k, &lat, 0.9).unwrap().adjoint();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn lift_is_linear() {
        let lat = open(5);
        let k = FlatKernel::random(5, 1.0, 1);
        let l = FlatKernel::random(5, 1.0, 2);
        let sum = FlatKernel { matrix: k.matrix.add(&l.matrix), ..k.clone() };
        let lhs = lift(&sum, &lat, 0.4).unwrap();
        let rhs = lift(&k, &lat, 0.4).unwrap().add(&lift(&l, &lat, 0.4).unwrap());
        assert!(lhs.sub(&rhs).matrix().max_abs() < 1e-15);
    }

    #[test]
    fn propagation_is_respected() {
        let lat = open(6);
        let k = FlatKernel::random(6, 2.0, 5);
        let lifted = lift(&k, &lat, 1.0).unwrap();
        assert!(crate::operators::propagation(&lifted) <= 2.0);
        assert!(FlatKernel::new(3, 1.0, [((0, 0), (1, 1), Complex64::new(1.0, 0.0))]).is_err());
    }

    #[test]
    fn identity_pair_has_no_defect() {
        let lat = open(6);
        let d = multiplicativity_defect(&FlatKernel::identity(6), &FlatKernel::identity(6), &lat, 0.5).unwrap();
        assert_eq!((d.max_entry, d.radius), (0.0, 0.0));
    }

    #[test]
    fn shift_pair_defect_hugs_the_axis() {
        let lat = open(8);
        let d = multiplicativity_defect(&FlatKernel::shift_x(8), &FlatKernel::shift_y(8), &lat, 1.1).unwrap();
        assert!(d.max_entry > 0.1);
        assert!(d.radius <= 4.0, "radius {}", d.radius);
        assert!(d.within_slack());
    }

    #[test]
    fn composition_is_exact_away_from_the_axis() {
        let lat = open(8);
        let (r, s) = (2.0, 1.0);
        // kernels crossing the cut far from the axis still compose exactly
        let near_axis = |p: (i64, i64)| (p.0 as f64).hypot(p.1 as f64) <= r + s + 1.0;
        let k = FlatKernel::random(8, r, 3).without_sites(near_axis);
        let l = FlatKernel::random(8, s, 4).without_sites(near_axis);
        let d = multiplicativity_defect(&k, &l, &lat, 2.4).unwrap();
        assert!(d.max_entry < 1e-13, "{}", d.max_entry);
    }

    #[test]
    fn lifted_product_differs_only_near_axis_for_random_kernels() {
        let lat = open(10);
        for seed in 0..5 {
            let k = FlatKernel::random(10, 2.0, seed);
            let l = FlatKernel::random(10, 1.0, seed + 100);
            let d = multiplicativity_defect(&k, &l, &lat, 0.3 * seed as f64).unwrap();
            assert!(d.within_slack(), "seed {seed}: {d:?}");
            let nb = norm_bound_check(&k, &lat, 0.3).unwrap();
            assert!(nb.holds());
        }
    }
}
