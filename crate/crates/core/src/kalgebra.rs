//! Symbolic bookkeeping for the K-theory of the 3-torus: the eight Bott
//! generators, their transformation under unimodular frames, the dislocation
//! boundary map, and the Altland–Zirnbauer lookup tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{BurgersFrame, IntMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KAlgebraError {
    #[error("unknown symmetry class label {0:?}")]
    UnknownLabel(String),
    #[error("class mixes even and odd generators")]
    MixedParity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Unit,
    X,
    Y,
    Z,
    Xy,
    Yz,
    Zx,
    Xyz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Generator {
    pub const ALL: [Generator; 8] = [
        Generator::Unit,
        Generator::X,
        Generator::Y,
        Generator::Z,
        Generator::Xy,
        Generator::Yz,
        Generator::Zx,
        Generator::Xyz,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    /// Sorted coordinate indices and the sign relating the generator to the
    /// wedge of those basis vectors (`zx = -(x∧z)`).
    fn wedge(self) -> (&'static [usize], i64) {
        match self {
            Generator::Unit => (&[], 1),
            Generator::X => (&[0], 1),
            Generator::Y => (&[1], 1),
            Generator::Z => (&[2], 1),
            Generator::Xy => (&[0, 1], 1),
            Generator::Yz => (&[1, 2], 1),
            Generator::Zx => (&[0, 2], -1),
            Generator::Xyz => (&[0, 1, 2], 1),
        }
    }

    pub fn degree(self) -> usize {
        self.wedge().0.len()
    }

    pub fn parity(self) -> Parity {
        if self.degree().is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Integer combination of Bott generators of a single parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KClass {
    coefficients: [i64; 8],
}

impl KClass {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn generator(g: Generator) -> Self {
        let mut c = Self::zero();
        c.coefficients[g.slot()] = 1;
        c
    }

    pub fn from_coefficients(coefficients: [i64; 8]) -> Result<Self, KAlgebraError> {
        let has = |p: Parity| Generator::ALL.iter().any(|g| g.parity() == p && coefficients[g.slot()] != 0);
        if has(Parity::Even) && has(Parity::Odd) {
            return Err(KAlgebraError::MixedParity);
        }
        Ok(Self { coefficients })
    }

    /// Class of a Fermi projection with the given weak Chern numbers
    /// `(c_yz, c_zx, c_xy)` and rank `rank`.
    pub fn from_weak_vector(rank: i64, weak: [i64; 3]) -> Self {
        let mut c = Self::zero();
        c.coefficients[Generator::Unit.slot()] = rank;
        c.coefficients[Generator::Yz.slot()] = weak[0];
        c.coefficients[Generator::Zx.slot()] = weak[1];
        c.coefficients[Generator::Xy.slot()] = weak[2];
        c
    }

    pub fn coefficient(&self, g: Generator) -> i64 {
        self.coefficients[g.slot()]
    }

    pub fn coefficients(&self) -> [i64; 8] {
        self.coefficients
    }

    /// Even for the zero class.
    pub fn parity(&self) -> Parity {
        if Generator::ALL.iter().any(|g| g.parity() == Parity::Odd && self.coefficient(*g) != 0) {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, KAlgebraError> {
        let mut out = [0; 8];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.coefficients[k] + other.coefficients[k];
        }
        Self::from_coefficients(out)
    }

    pub fn scale(&self, s: i64) -> Self {
        Self { coefficients: self.coefficients.map(|c| c * s) }
    }
}

impl fmt::Display for KClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = Generator::ALL
            .iter()
            .filter(|g| self.coefficient(**g) != 0)
            .map(|g| format!("{}·β_{:?}", self.coefficient(*g), g).to_lowercase())
            .collect();
        if terms.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", terms.join(" + "))
        }
    }
}

fn minor(m: &IntMatrix, rows: &[usize], cols: &[usize]) -> i64 {
    match rows.len() {
        0 => 1,
        1 => m[rows[0]][cols[0]],
        2 => m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]],
        3 => crate::lattice::det3(m),
        _ => unreachable!("at most three coordinates"),
    }
}

/// Image of a class under the map induced by `m` on the exterior algebra of
/// `ℤ³`, degree by degree.
pub fn exterior_action(c: &KClass, m: &IntMatrix) -> KClass {
    let mut out = [0i64; 8];
    for src in Generator::ALL {
        let coeff = c.coefficient(src);
        if coeff == 0 {
            continue;
        }
        let (cols, src_sign) = src.wedge();
        for dst in Generator::ALL.iter().filter(|g| g.degree() == src.degree()) {
            let (rows, dst_sign) = dst.wedge();
            out[dst.slot()] += coeff * src_sign * dst_sign * minor(m, rows, cols);
        }
    }
    KClass { coefficients: out }
}

/// Transport of a class into the frame `t`: the action of `t⁻¹`.
pub fn pullback(c: &KClass, t: &IntMatrix) -> KClass {
    exterior_action(c, &crate::lattice::inverse_unimodular(t))
}

/// Integer index carried by the dislocation with the given frame.
pub fn boundary_map(c: &KClass, frame: &BurgersFrame) -> i64 {
    pullback(c, frame.matrix()).coefficient(Generator::Xy)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvariantGroup {
    #[serde(rename = "Z")]
    Integers,
    #[serde(rename = "Z2")]
    Z2,
    #[serde(rename = "0")]
    Trivial,
}

impl fmt::Display for InvariantGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvariantGroup::Integers => "Z",
            InvariantGroup::Z2 => "Z2",
            InvariantGroup::Trivial => "0",
        })
    }
}

/// The ten Altland–Zirnbauer classes in the usual order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AzClass {
    A,
    AIII,
    AI,
    BDI,
    D,
    DIII,
    AII,
    CII,
    C,
    CI,
}

/// Which antiunitary and chiral symmetries a class carries; `Some(±1)` gives
/// the square of the antiunitary operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymmetrySignature {
    pub time_reversal: Option<i8>,
    pub particle_hole: Option<i8>,
    pub chiral: bool,
}

impl AzClass {
    pub const ALL: [AzClass; 10] = [
        AzClass::A,
        AzClass::AIII,
        AzClass::AI,
        AzClass::BDI,
        AzClass::D,
        AzClass::DIII,
        AzClass::AII,
        AzClass::CII,
        AzClass::C,
        AzClass::CI,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AzClass::A => "A",
            AzClass::AIII => "AIII",
            AzClass::AI => "AI",
            AzClass::BDI => "BDI",
            AzClass::D => "D",
            AzClass::DIII => "DIII",
            AzClass::AII => "AII",
            AzClass::CII => "CII",
            AzClass::C => "C",
            AzClass::CI => "CI",
        }
    }

    pub fn signature(self) -> SymmetrySignature {
        let (t, c, s) = match self {
            AzClass::A => (None, None, false),
            AzClass::AIII => (None, None, true),
            AzClass::AI => (Some(1), None, false),
            AzClass::BDI => (Some(1), Some(1), true),
            AzClass::D => (None, Some(1), false),
            AzClass::DIII => (Some(-1), Some(1), true),
            AzClass::AII => (Some(-1), None, false),
            AzClass::CII => (Some(-1), Some(-1), true),
            AzClass::C => (None, Some(-1), false),
            AzClass::CI => (Some(1), Some(-1), true),
        };
        SymmetrySignature { time_reversal: t, particle_hole: c, chiral: s }
    }

    /// Strong invariant group of two-dimensional systems in this class.
    pub fn invariant_group_2d(self) -> InvariantGroup {
        use InvariantGroup::*;
        match self {
            AzClass::A | AzClass::D | AzClass::C => Integers,
            AzClass::DIII | AzClass::AII => Z2,
            AzClass::AIII | AzClass::AI | AzClass::BDI | AzClass::CII | AzClass::CI => Trivial,
        }
    }
}

impl FromStr for AzClass {
    type Err = KAlgebraError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AzClass::ALL
            .into_iter()
            .find(|c| c.label() == s.trim())
            .ok_or_else(|| KAlgebraError::UnknownLabel(s.to_string()))
    }
}

pub fn az_lookup(label: &str) -> Result<InvariantGroup, KAlgebraError> {
    Ok(label.parse::<AzClass>()?.invariant_group_2d())
}

/// Order of a Bott generator of exterior degree `l` in real K-theory: free
/// for `l ≡ 0, 4`, two-torsion for `l ≡ 1, 2`, absent otherwise (mod 8).
pub fn real_generator_order(degree: i64) -> InvariantGroup {
    match degree.rem_euclid(8) {
        0 | 4 => InvariantGroup::Integers,
        1 | 2 => InvariantGroup::Z2,
        _ => InvariantGroup::Trivial,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{burgers_frame, matmul3};
    use proptest::prelude::*;

    fn b(v: [i64; 3]) -> BurgersFrame {
        burgers_frame(v).unwrap()
    }

    #[test]
    fn generator_images_for_straight_dislocation() {
        let id = BurgersFrame::identity();
        assert_eq!(boundary_map(&KClass::generator(Generator::Xy), &id), 1);
        for g in Generator::ALL.into_iter().filter(|g| *g != Generator::Xy) {
            assert_eq!(boundary_map(&KClass::generator(g), &id), 0, "{g:?}");
        }
    }

    #[test]
    fn tilted_burgers_vector_pairs_with_weak_vector() {
        let c = KClass::from_weak_vector(1, [2, -3, 5]);
        assert_eq!(boundary_map(&c, &b([1, 0, 1])), 2 + 5);
    }

    #[test]
    fn antidislocation_reverses_orientation() {
        assert_eq!(boundary_map(&KClass::generator(Generator::Xy), &b([0, 0, -1])), -1);
    }

    #[test]
    fn zx_orientation_sign() {
        // rotating x → y → z → x cycles the planar generators xy → yz → zx
        let cyc = [[0, 0, 1], [1, 0, 0], [0, 1, 0]];
        let img = exterior_action(&KClass::generator(Generator::Xy), &cyc);
        assert_eq!(img, KClass::generator(Generator::Yz));
        let img = exterior_action(&img, &cyc);
        assert_eq!(img, KClass::generator(Generator::Zx));
        let img = exterior_action(&img, &cyc);
        assert_eq!(img, KClass::generator(Generator::Xy));
    }

    #[test]
    fn mixed_parity_rejected() {
        let mut coeffs = [0; 8];
        coeffs[Generator::Xy as usize] = 1;
        coeffs[Generator::Z as usize] = 1;
        assert_eq!(KClass::from_coefficients(coeffs), Err(KAlgebraError::MixedParity));
    }

    #[test]
    fn az_table() {
        assert_eq!(az_lookup("A").unwrap(), InvariantGroup::Integers);
        assert_eq!(az_lookup("DIII").unwrap(), InvariantGroup::Z2);
        assert_eq!(az_lookup("CI").unwrap(), InvariantGroup::Trivial);
        assert!(matches!(az_lookup("BDII"), Err(KAlgebraError::UnknownLabel(_))));
        let nontrivial: Vec<_> =
            AzClass::ALL.into_iter().filter(|c| c.invariant_group_2d() != InvariantGroup::Trivial).collect();
        assert_eq!(nontrivial, [AzClass::A, AzClass::D, AzClass::DIII, AzClass::AII, AzClass::C]);
    }

    #[test]
    fn real_orders() {
        assert_eq!(real_generator_order(0), InvariantGroup::Integers);
        assert_eq!(real_generator_order(2), InvariantGroup::Z2);
        assert_eq!(real_generator_order(3), InvariantGroup::Trivial);
        assert_eq!(real_generator_order(4), InvariantGroup::Integers);
        assert_eq!(real_generator_order(9), InvariantGroup::Z2);
        assert_eq!(real_generator_order(-7), InvariantGroup::Z2);
    }

    fn unimodular() -> impl Strategy<Value = IntMatrix> {
        prop::collection::vec((0usize..3, 0usize..3, -2i64..=2, any::<bool>()), 0..8).prop_map(|ops| {
            let mut m: IntMatrix = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
            for (i, j, k, flip) in ops {
                let mut e: IntMatrix = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
                if i != j {
                    e[i][j] = k;
                } else if flip {
                    e[i][i] = -1;
                }
                m = matmul3(&m, &e);
            }
            m
        })
    }

    fn even_class() -> impl Strategy<Value = KClass> {
        (-3i64..=3, prop::array::uniform3(-4i64..=4)).prop_map(|(r, w)| KClass::from_weak_vector(r, w))
    }

    proptest! {
        #[test]
        fn boundary_map_is_additive(c1 in even_class(), c2 in even_class(), t in unimodular()) {
            let frame = BurgersFrame::from_matrix(t).unwrap();
            let sum = c1.add(&c2).unwrap();
            prop_assert_eq!(boundary_map(&sum, &frame), boundary_map(&c1, &frame) + boundary_map(&c2, &frame));
        }

        #[test]
        fn even_classes_pair_with_burgers_vector(c in even_class(), v in prop::array::uniform3(-5i64..=5)) {
            if let Ok(frame) = burgers_frame(v) {
                let weak = [c.coefficient(Generator::Yz), c.coefficient(Generator::Zx), c.coefficient(Generator::Xy)];
                let dot: i64 = (0..3).map(|k| v[k] * weak[k]).sum();
                prop_assert_eq!(boundary_map(&c, &frame), dot);
            }
        }

        #[test]
        fn odd_classes_die(x in -3i64..=3, y in -3i64..=3, z in -3i64..=3, w in -3i64..=3, t in unimodular()) {
            let mut coeffs = [0; 8];
            coeffs[Generator::X as usize] = x;
            coeffs[Generator::Y as usize] = y;
            coeffs[Generator::Z as usize] = z;
            coeffs[Generator::Xyz as usize] = w;
            let c = KClass::from_coefficients(coeffs).unwrap();
            prop_assert_eq!(boundary_map(&c, &BurgersFrame::from_matrix(t).unwrap()), 0);
        }

        #[test]
        fn frame_equivariance(c in even_class(), t in unimodular(), t2 in unimodular()) {
            // pulling back along t2 first and then along t is the pullback
            // along t2·t
            let composite = BurgersFrame::from_matrix(matmul3(&t2, &t)).unwrap();
            let lhs = boundary_map(&c, &composite);
            let rhs = boundary_map(&pullback(&c, &t2), &BurgersFrame::from_matrix(t).unwrap());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn exterior_action_is_functorial(c in even_class(), a in unimodular(), b2 in unimodular()) {
            let lhs = exterior_action(&c, &matmul3(&a, &b2));
            let rhs = exterior_action(&exterior_action(&c, &b2), &a);
            prop_assert_eq!(lhs, rhs);
        }
    }
}
