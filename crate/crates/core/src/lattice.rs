//! Screw-dislocated square lattice: helical height offsets, nearest lifts,
//! finite truncations with their cut bonds, and Burgers-vector frames.
//!
//! Sites of a truncation are columns `(x, y)`; the layer direction is always
//! handled in momentum space, so a column stands for a whole stack of sites.
//! Cut bonds are the `+y` bonds `(x, 0) → (x, 1)`, and hopping across one
//! lowers the layer index by one.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("half width {0} is below the minimum of 2")]
    HalfWidthTooSmall(i64),
    #[error("core removal radius {radius} must be below the half width {half_width}")]
    RemovalTooLarge { radius: f64, half_width: i64 },
    #[error("core removal radius must be finite and non-negative, got {0}")]
    BadRemovalRadius(f64),
    #[error("dipole separation {separation} must lie in 1..{limit}")]
    BadSeparation { separation: u32, limit: i64 },
    #[error("Burgers vector must be non-zero")]
    ZeroBurgers,
    #[error("Burgers vector {0:?} is not primitive")]
    NonPrimitiveBurgers([i64; 3]),
}

/// Height offset of column `(x, y)` in units of the layer spacing: the planar
/// angle over `2π`, on the branch `[-1/2, 1/2)`. The axis column gets 0.
pub fn height_offset(x: i64, y: i64) -> f64 {
    if is_axis(x, y) {
        return 0.0;
    }
    let h = (y as f64).atan2(x as f64) / TAU;
    if h >= 0.5 {
        h - 1.0
    } else {
        h
    }
}

pub fn is_axis(x: i64, y: i64) -> bool {
    x == 0 && y == 0
}

/// A site of the helical lattice: column `(x, y)` and layer label `z_index`.
/// Its embedded height is `z_index + height_offset(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub y: i64,
    pub z_index: i64,
}

impl Site {
    pub fn height(&self) -> f64 {
        self.z_index as f64 + height_offset(self.x, self.y)
    }
}

/// Site in column `(x, y)` whose height is nearest to `z`; exact ties go to the
/// higher site.
pub fn nearest_lift(x: i64, y: i64, z: f64) -> Site {
    let h = height_offset(x, y);
    Site { x, y, z_index: (z - h + 0.5).floor() as i64 }
}

/// Layer change picked up by the geometric shift from column `from` to column
/// `to`: start at the integer point `(from, 0)`, move to its nearest lift, shift
/// in-plane keeping the height, take the nearest lift again, and read off the
/// integer point that lifts to it.
pub fn geometric_layer_offset(from: (i64, i64), to: (i64, i64)) -> i64 {
    let start = nearest_lift(from.0, from.1, 0.0);
    let landed = nearest_lift(to.0, to.1, start.height());
    // integer height w lifts to index w + floor(1/2 - h) in its column
    landed.z_index - (0.5 - height_offset(to.0, to.1)).floor() as i64
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub type IntMatrix = [[i64; 3]; 3];

pub fn det3(m: &IntMatrix) -> i64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn matmul3(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let mut out = [[0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn matvec3(a: &IntMatrix, v: [i64; 3]) -> [i64; 3] {
    [0, 1, 2].map(|i| (0..3).map(|k| a[i][k] * v[k]).sum())
}

/// Inverse of a unimodular integer matrix via the adjugate.
pub fn inverse_unimodular(m: &IntMatrix) -> IntMatrix {
    let det = det3(m);
    assert!(det.abs() == 1, "matrix is not unimodular (det {det})");
    let cof = |r: usize, c: usize| {
        let rows: Vec<usize> = (0..3).filter(|&i| i != r).collect();
        let cols: Vec<usize> = (0..3).filter(|&j| j != c).collect();
        let minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
        if (r + c).is_multiple_of(2) {
            minor
        } else {
            -minor
        }
    };
    let mut inv = [[0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = cof(j, i) * det;
        }
    }
    inv
}

/// Unimodular frame `T = [a | c | b]` whose last column is the Burgers vector.
/// The completion is normalized to `det T = +1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurgersFrame {
    burgers: [i64; 3],
    matrix: IntMatrix,
}

impl BurgersFrame {
    pub fn identity() -> Self {
        Self { burgers: [0, 0, 1], matrix: [[1, 0, 0], [0, 1, 0], [0, 0, 1]] }
    }

    pub fn burgers(&self) -> [i64; 3] {
        self.burgers
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> IntMatrix {
        inverse_unimodular(&self.matrix)
    }

    pub fn det(&self) -> i64 {
        det3(&self.matrix)
    }

    /// Frame from an explicit unimodular matrix; the Burgers vector is read off
    /// its last column.
    pub fn from_matrix(matrix: IntMatrix) -> Option<Self> {
        (det3(&matrix).abs() == 1).then(|| Self { burgers: [matrix[0][2], matrix[1][2], matrix[2][2]], matrix })
    }
}

pub fn burgers_frame(b: [i64; 3]) -> Result<BurgersFrame, LatticeError> {
    if b == [0, 0, 0] {
        return Err(LatticeError::ZeroBurgers);
    }
    if gcd(gcd(b[0], b[1]), b[2]) != 1 {
        return Err(LatticeError::NonPrimitiveBurgers(b));
    }
    // Row-reduce b to ±e_z by integer Euclid steps, recording the steps in
    // `ops` so that ops·b stays equal to the reduced vector.
    let mut ops: IntMatrix = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    let mut v = b;
    loop {
        let nonzero: Vec<usize> = (0..3).filter(|&i| v[i] != 0).collect();
        if nonzero.len() == 1 {
            break;
        }
        let pivot = *nonzero.iter().min_by_key(|&&i| (v[i].abs(), i)).expect("non-zero vector");
        for &i in nonzero.iter().filter(|&&i| i != pivot) {
            let q = v[i].div_euclid(v[pivot]);
            v[i] -= q * v[pivot];
            let row = ops[pivot];
            for (entry, p) in ops[i].iter_mut().zip(row) {
                *entry -= q * p;
            }
        }
    }
    let lead = (0..3).find(|&i| v[i] != 0).expect("non-zero vector");
    ops.swap(lead, 2);
    v.swap(lead, 2);
    if v[2] < 0 {
        ops[2] = ops[2].map(|e| -e);
    }
    let mut t = inverse_unimodular(&ops);
    if det3(&t) < 0 {
        for row in &mut t {
            row[0] = -row[0];
        }
    }
    debug_assert_eq!([t[0][2], t[1][2], t[2][2]], b);
    Ok(BurgersFrame { burgers: b, matrix: t })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Square box, one dislocation at the origin, cut running to the left edge.
    Open,
    /// Periodic box with a dislocation/anti-dislocation pair joined by a cut
    /// segment of `separation` bonds.
    TorusDipole { separation: u32 },
}

/// Dislocation core in the xy-plane with its orientation (+1 for the Burgers
/// vector along `+z`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Core {
    pub position: (i64, i64),
    pub orientation: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutBond {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug)]
pub struct DislocatedLattice {
    half_width: i64,
    boundary: Boundary,
    core_removal_radius: f64,
    frame: BurgersFrame,
    sites: Vec<(i64, i64)>,
    index: HashMap<(i64, i64), usize>,
    cut_bonds: Vec<CutBond>,
    cut_from: Vec<bool>,
    cores: Vec<Core>,
}

pub fn build_lattice(
    half_width: i64,
    boundary: Boundary,
    core_removal_radius: f64,
    frame: BurgersFrame,
) -> Result<DislocatedLattice, LatticeError> {
    if half_width < 2 {
        return Err(LatticeError::HalfWidthTooSmall(half_width));
    }
    if !core_removal_radius.is_finite() || core_removal_radius < 0.0 {
        return Err(LatticeError::BadRemovalRadius(core_removal_radius));
    }
    if core_removal_radius >= half_width as f64 {
        return Err(LatticeError::RemovalTooLarge { radius: core_removal_radius, half_width });
    }
    let width = 2 * half_width + 1;
    let wrap = |c: i64| (c + half_width).rem_euclid(width) - half_width;
    let cores = match boundary {
        Boundary::Open => vec![Core { position: (0, 0), orientation: 1 }],
        Boundary::TorusDipole { separation } => {
            if separation == 0 || i64::from(separation) >= 2 * half_width {
                return Err(LatticeError::BadSeparation { separation, limit: 2 * half_width });
            }
            let partner = (wrap(-(i64::from(separation) + 1)), 0);
            vec![Core { position: (0, 0), orientation: 1 }, Core { position: partner, orientation: -1 }]
        }
    };
    let mut lattice = DislocatedLattice {
        half_width,
        boundary,
        core_removal_radius,
        frame,
        sites: Vec::new(),
        index: HashMap::new(),
        cut_bonds: Vec::new(),
        cut_from: Vec::new(),
        cores,
    };
    for x in -half_width..=half_width {
        for y in -half_width..=half_width {
            let removed = core_removal_radius > 0.0
                && lattice.cores.iter().any(|c| lattice.planar_distance((x, y), c.position) <= core_removal_radius);
            if !removed {
                lattice.index.insert((x, y), lattice.sites.len());
                lattice.sites.push((x, y));
            }
        }
    }
    let cut_columns: Vec<i64> = match boundary {
        Boundary::Open => (-half_width..0).collect(),
        Boundary::TorusDipole { separation } => (1..=i64::from(separation)).map(|d| wrap(-d)).rev().collect(),
    };
    lattice.cut_from = vec![false; lattice.sites.len()];
    for x in cut_columns {
        if let (Some(&from), Some(&to)) = (lattice.index.get(&(x, 0)), lattice.index.get(&(x, 1))) {
            lattice.cut_bonds.push(CutBond { from, to });
            lattice.cut_from[from] = true;
        }
    }
    lattice.cut_bonds.sort_by_key(|b| b.from);
    Ok(lattice)
}

impl DislocatedLattice {
    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::TorusDipole { .. })
    }

    pub fn core_removal_radius(&self) -> f64 {
        self.core_removal_radius
    }

    pub fn frame(&self) -> &BurgersFrame {
        &self.frame
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[(i64, i64)] {
        &self.sites
    }

    pub fn site(&self, idx: usize) -> (i64, i64) {
        self.sites[idx]
    }

    pub fn index_of(&self, x: i64, y: i64) -> Option<usize> {
        self.index.get(&(x, y)).copied()
    }

    pub fn cut_bonds(&self) -> &[CutBond] {
        &self.cut_bonds
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    /// Same geometry with nothing removed around the cores.
    pub fn without_core_removal(&self) -> DislocatedLattice {
        build_lattice(self.half_width, self.boundary, 0.0, self.frame).expect("parameters already validated")
    }

    fn wrap(&self, c: i64) -> i64 {
        let width = 2 * self.half_width + 1;
        (c + self.half_width).rem_euclid(width) - self.half_width
    }

    fn min_image(&self, d: i64) -> i64 {
        if self.is_periodic() {
            let width = 2 * self.half_width + 1;
            let d = d.rem_euclid(width);
            d.min(width - d)
        } else {
            d.abs()
        }
    }

    /// Index of the site at `(x + dx, y + dy)`, wrapping on the torus.
    pub fn neighbor(&self, idx: usize, dx: i64, dy: i64) -> Option<usize> {
        let (x, y) = self.sites[idx];
        let (mut nx, mut ny) = (x + dx, y + dy);
        if self.is_periodic() {
            nx = self.wrap(nx);
            ny = self.wrap(ny);
        }
        self.index_of(nx, ny)
    }

    /// Signed cut crossing of the unit bond `from → to`: `+1` when it is a cut
    /// bond traversed in `+y`, `-1` when traversed backwards, `0` otherwise.
    pub fn cut_crossing(&self, from: usize, to: usize) -> i64 {
        if self.cut_from[from] && self.neighbor(from, 0, 1) == Some(to) {
            1
        } else if self.cut_from[to] && self.neighbor(to, 0, 1) == Some(from) {
            -1
        } else {
            0
        }
    }

    pub fn is_cut_from(&self, idx: usize) -> bool {
        self.cut_from[idx]
    }

    /// Signed number of cut crossings along a nearest-neighbour path of site
    /// indices.
    pub fn path_crossings(&self, path: &[usize]) -> i64 {
        path.windows(2).map(|w| self.cut_crossing(w[0], w[1])).sum()
    }

    /// Euclidean distance in the plane, minimum image on the torus.
    pub fn planar_distance(&self, a: (i64, i64), b: (i64, i64)) -> f64 {
        let dx = self.min_image(a.0 - b.0) as f64;
        let dy = self.min_image(a.1 - b.1) as f64;
        dx.hypot(dy)
    }

    /// Lattice (ℓ¹) distance between two sites, minimum image on the torus.
    pub fn lattice_distance(&self, a: usize, b: usize) -> i64 {
        let (pa, pb) = (self.sites[a], self.sites[b]);
        self.min_image(pa.0 - pb.0) + self.min_image(pa.1 - pb.1)
    }

    pub fn core_distance(&self, idx: usize, core: usize) -> f64 {
        self.planar_distance(self.sites[idx], self.cores[core].position)
    }

    /// Distance to the nearest core.
    pub fn axis_distance(&self, idx: usize) -> f64 {
        (0..self.cores.len()).map(|c| self.core_distance(idx, c)).fold(f64::INFINITY, f64::min)
    }

    /// Number of bond steps to the outside of an open box; unbounded on the torus.
    pub fn boundary_depth(&self, idx: usize) -> i64 {
        if self.is_periodic() {
            return i64::MAX;
        }
        let (x, y) = self.sites[idx];
        self.half_width + 1 - x.abs().max(y.abs())
    }

    pub fn to_document(&self) -> LatticeDocument {
        LatticeDocument {
            version: LatticeDocument::VERSION,
            half_width: self.half_width,
            boundary: self.boundary,
            core_removal_radius: self.core_removal_radius,
            frame: self.frame,
            cores: self.cores.clone(),
            sites: self.sites.iter().map(|&(x, y)| [x, y]).collect(),
            cut_bonds: self.cut_bonds.iter().map(|b| [b.from, b.to]).collect(),
        }
    }
}

/// Serializable snapshot of a truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDocument {
    pub version: u32,
    pub half_width: i64,
    pub boundary: Boundary,
    pub core_removal_radius: f64,
    pub frame: BurgersFrame,
    pub cores: Vec<Core>,
    pub sites: Vec<[i64; 2]>,
    pub cut_bonds: Vec<[usize; 2]>,
}

impl LatticeDocument {
    pub const VERSION: u32 = 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn open(l: i64, r: f64) -> DislocatedLattice {
        build_lattice(l, Boundary::Open, r, BurgersFrame::identity()).unwrap()
    }

    #[test]
    fn height_examples() {
        assert_eq!(height_offset(1, 0), 0.0);
        assert_eq!(height_offset(0, 1), 0.25);
        assert_eq!(height_offset(-1, 0), -0.5);
        assert_eq!(height_offset(0, 0), 0.0);
        assert!(is_axis(0, 0));
    }

    #[test]
    fn height_range() {
        for x in -20..=20 {
            for y in -20..=20 {
                let h = height_offset(x, y);
                assert!((-0.5..0.5).contains(&h), "({x},{y}) -> {h}");
            }
        }
    }

    #[test]
    fn height_reflection_asymmetry_only_on_cut_half_line() {
        for x in -50i64..=50 {
            for y in -50i64..=50 {
                if is_axis(x, y) {
                    continue;
                }
                let odd = height_offset(x, y) == -height_offset(x, -y);
                let on_cut = y == 0 && x < 0;
                assert_eq!(odd, !on_cut, "({x},{y})");
            }
        }
    }

    #[test]
    fn nearest_lift_examples() {
        assert_eq!(nearest_lift(1, 0, 5.0), Site { x: 1, y: 0, z_index: 5 });
        assert_eq!(nearest_lift(0, 1, 0.0), Site { x: 0, y: 1, z_index: 0 });
        let tie = nearest_lift(-3, 0, 0.0);
        assert_eq!(tie.z_index, 1);
        assert_eq!(tie.height(), 0.5);
    }

    #[test]
    fn open_lattice_examples() {
        let lat = open(2, 0.0);
        assert_eq!(lat.len(), 25);
        let cuts: Vec<_> = lat.cut_bonds().iter().map(|b| (lat.site(b.from), lat.site(b.to))).collect();
        assert_eq!(cuts, vec![((-2, 0), (-2, 1)), ((-1, 0), (-1, 1))]);
    }

    #[test]
    fn core_removal_counts() {
        let lat = open(2, 1.5);
        assert_eq!(lat.len(), 16);
        assert!(lat.sites().iter().all(|&(x, y)| ((x * x + y * y) as f64) > 2.25));
        assert!(matches!(
            build_lattice(3, Boundary::Open, 3.0, BurgersFrame::identity()),
            Err(LatticeError::RemovalTooLarge { .. })
        ));
    }

    #[test]
    fn torus_dipole_cut_segment() {
        let lat = build_lattice(3, Boundary::TorusDipole { separation: 3 }, 0.0, BurgersFrame::identity()).unwrap();
        assert_eq!(lat.len(), 49);
        // brute force: every +y bond whose midpoint (x, 1/2) sits on the segment
        // between the two flux plaquettes (-1/2, 1/2) and (-s-1/2, 1/2)
        let mut expected = Vec::new();
        for (idx, &(x, y)) in lat.sites().iter().enumerate() {
            let up = lat.neighbor(idx, 0, 1).unwrap();
            let mid = (x as f64, y as f64 + 0.5);
            if mid.1 == 0.5 && mid.0 < -0.5 && mid.0 > -3.5 {
                expected.push(CutBond { from: idx, to: up });
            }
        }
        assert_eq!(lat.cut_bonds(), expected.as_slice());
        // mirror image of the axis column, (-4, 0), wrapped into the box
        assert_eq!(lat.cores()[1].position, (3, 0));
        assert_eq!(lat.cores()[1].orientation, -1);
    }

    #[test]
    fn dipole_partner_wraps() {
        let lat = build_lattice(3, Boundary::TorusDipole { separation: 5 }, 0.0, BurgersFrame::identity()).unwrap();
        assert_eq!(lat.cores()[1].position, (1, 0));
        assert_eq!(lat.cut_bonds().len(), 5);
        assert!(build_lattice(3, Boundary::TorusDipole { separation: 6 }, 0.0, BurgersFrame::identity()).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let a = open(5, 1.2);
        let b = open(5, 1.2);
        assert_eq!(a.sites(), b.sites());
        assert_eq!(a.cut_bonds(), b.cut_bonds());
        assert_eq!(a.to_document(), b.to_document());
        let mut sorted = a.sites().to_vec();
        sorted.sort();
        assert_eq!(sorted, a.sites());
    }

    #[test]
    fn burgers_frame_examples() {
        assert_eq!(burgers_frame([0, 0, 1]).unwrap(), BurgersFrame::identity());
        assert_eq!(burgers_frame([0, 0, 2]), Err(LatticeError::NonPrimitiveBurgers([0, 0, 2])));
        assert_eq!(burgers_frame([0, 0, 0]), Err(LatticeError::ZeroBurgers));
        let f = burgers_frame([1, 0, 1]).unwrap();
        assert_eq!(matvec3(f.matrix(), [0, 0, 1]), [1, 0, 1]);
        assert_eq!(f.det(), 1);
    }

    #[test]
    fn antidislocation_frame_is_orientation_preserving() {
        let f = burgers_frame([0, 0, -1]).unwrap();
        assert_eq!(f.det(), 1);
        assert_eq!(matvec3(f.matrix(), [0, 0, 1]), [0, 0, -1]);
    }

    /// Walk from `a` to `b`, moving along `first` axis before the other.
    fn staircase(lat: &DislocatedLattice, a: (i64, i64), b: (i64, i64), x_first: bool) -> Vec<usize> {
        let mut cur = a;
        let mut path = vec![lat.index_of(cur.0, cur.1).unwrap()];
        let mut step = |cur: &mut (i64, i64), horizontal: bool| {
            let target = if horizontal { b.0 } else { b.1 };
            loop {
                let c = if horizontal { &mut cur.0 } else { &mut cur.1 };
                if *c == target {
                    break;
                }
                *c += (target - *c).signum();
                path.push(lat.index_of(cur.0, cur.1).unwrap());
            }
        };
        step(&mut cur, x_first);
        step(&mut cur, !x_first);
        path
    }

    #[test]
    fn geometric_offsets_are_a_gauge_of_the_cut() {
        // The geometric construction moves the decrement to the row below and
        // adds one compensating x-bond next to the axis.
        for x in -6i64..=6 {
            for y in -6i64..=6 {
                for (dx, dy) in [(1, 0), (0, 1)] {
                    let off = geometric_layer_offset((x, y), (x + dx, y + dy));
                    let expected = match (dx, dy) {
                        (0, 1) if y == -1 && x < 0 => -1,
                        (1, 0) if x == -1 && y == 0 => 1,
                        _ => 0,
                    };
                    assert_eq!(off, expected, "bond ({x},{y}) + ({dx},{dy})");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn lift_is_layer_equivariant(x in -30i64..30, y in -30i64..30, z in -40.0..40.0f64, n in -100i64..100) {
            let base = nearest_lift(x, y, z);
            let shifted = nearest_lift(x, y, z + n as f64);
            prop_assert_eq!(shifted.z_index, base.z_index + n);
        }

        #[test]
        fn lift_is_nearest(x in -30i64..30, y in -30i64..30, z in -40.0..40.0f64) {
            let s = nearest_lift(x, y, z);
            let d = (s.height() - z).abs();
            prop_assert!(d <= 0.5 + 1e-12);
        }

        #[test]
        fn crossings_depend_only_on_encircling(ax in -6i64..=6, ay in -6i64..=6, bx in -6i64..=6, by in -6i64..=6) {
            let lat = open(6, 0.0);
            let p1 = staircase(&lat, (ax, ay), (bx, by), true);
            let p2 = staircase(&lat, (ax, ay), (bx, by), false);
            let diff = lat.path_crossings(&p1) - lat.path_crossings(&p2);
            // the loop p1·p2⁻¹ bounds the rectangle spanned by a and b; it
            // picks up a crossing only if it surrounds the flux plaquette
            let encloses = ax.min(bx) <= -1 && ax.max(bx) >= 0 && ay.min(by) <= 0 && ay.max(by) >= 1;
            if encloses {
                prop_assert_eq!(diff.abs(), 1);
            } else {
                prop_assert_eq!(diff, 0);
            }
        }

        #[test]
        fn frames_are_unimodular(b0 in -7i64..=7, b1 in -7i64..=7, b2 in -7i64..=7) {
            let b = [b0, b1, b2];
            match burgers_frame(b) {
                Ok(f) => {
                    prop_assert_eq!(f.det(), 1);
                    prop_assert_eq!(matvec3(f.matrix(), [0, 0, 1]), b);
                    prop_assert_eq!(matmul3(f.matrix(), &f.inverse()), [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
                }
                Err(_) => prop_assert!(b == [0, 0, 0] || gcd(gcd(b0, b1), b2) > 1),
            }
        }
    }
}
