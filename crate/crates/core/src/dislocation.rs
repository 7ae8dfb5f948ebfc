//! Spectra of dislocated Hamiltonians over the layer-momentum circle and three
//! estimators of the dislocation index: spectral flow of core-localized
//! branches, the localized winding of the boundary unitary, and σ_screw.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invariants::{bulk_gap, InvariantError, WeakVector};
use crate::kalgebra::{boundary_map, KClass};
use crate::lattice::{BurgersFrame, DislocatedLattice};
use crate::linalg::{eigh, Eigen, LinalgError};
use crate::models::{DislocatedHamiltonian, HoppingModel, ModelError, MomentumSlice};

/// Relative orientation of the measured spectral flow and the symbolic
/// boundary map, fixed once against the two-band stack at `m = -1` with
/// `b = ẑ`: its xy Chern number is `+1` and its core branch moves down.
pub const FLOW_ORIENTATION: i64 = -1;

/// Spectral flow expected from the bulk weak vector and the Burgers frame.
pub fn predicted_flow(weak: &WeakVector, frame: &BurgersFrame) -> i64 {
    FLOW_ORIENTATION * boundary_map(&KClass::from_weak_vector(0, weak.0), frame)
}

/// Overlap above which two window states at adjacent momenta are linked.
const LINK_OVERLAP: f64 = 0.1;
/// Minimal total overlap of a crossing-zone state with the next window.
const CONTINUATION_OVERLAP: f64 = 0.5;
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DislocationError {
    #[error("need at least 16 momenta on the kz circle, got {0}")]
    TooFewMomenta(usize),
    #[error("core radius must be positive, got {0}")]
    BadRadius(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error("eigensolver failed at kz = {kz}: {source}")]
    Eigen { kz: f64, source: LinalgError },
    #[error("χ needs a positive width, got {0}")]
    BadChi(f64),
    #[error("χ width {eps} exceeds the distance {limit} from μ to the bulk bands")]
    ChiTooWide { eps: f64, limit: f64 },
    #[error("bulk gap around μ = {mu} is closed once disorder is accounted for: {window:?}")]
    NoGap { mu: f64, window: EnergyWindow },
    #[error("energy window {window:?} is not inside the bulk gap {gap:?}")]
    WindowOutsideGap { window: EnergyWindow, gap: EnergyWindow },
    #[error("energy window holds {mean:.2} levels per momentum on average; need at least 4")]
    TooFewLevels { mean: f64 },
    #[error("branch matching after kz index {kz_index} is ambiguous (overlap {overlap:.3}); use a finer kz grid")]
    AmbiguousMatching { kz_index: usize, overlap: f64 },
    #[error("matched crossings after kz index {kz_index} sum to {matched}, level counting gives {counted}; use a finer kz grid")]
    CountMismatch { kz_index: usize, matched: i64, counted: i64 },
    #[error("estimate {value:.4} is {distance:.3} away from an integer")]
    NoConvergence { value: f64, distance: f64 },
    #[error("the sweep did not record the {0} integrand")]
    MissingIntegrand(&'static str),
}

/// Closed energy interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn around(center: f64, half_width: f64) -> Self {
        Self { lo: center - half_width, hi: center + half_width }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }

    pub fn contains_window(&self, other: &EnergyWindow) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Distance from `mu` to the nearer end.
    pub fn half_width_at(&self, mu: f64) -> f64 {
        (mu - self.lo).min(self.hi - mu)
    }
}

/// Bulk gap around `mu` shrunk by the disorder strength, which bounds the
/// shift of every eigenvalue.
pub fn gap_window(model: &HoppingModel, mu: f64) -> Result<EnergyWindow, DislocationError> {
    let (lo, hi) = bulk_gap(model, mu, 24)?;
    let w = model.disorder_strength();
    let window = EnergyWindow::new(lo + w, hi - w);
    if window.half_width_at(mu) <= 0.0 {
        return Err(DislocationError::NoGap { mu, window });
    }
    Ok(window)
}

/// Odd switching function, `-1` below `-ε` and `+1` above `ε`, cubic in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiFunction {
    eps: f64,
}

impl ChiFunction {
    pub fn new(eps: f64) -> Result<Self, DislocationError> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(DislocationError::BadChi(eps));
        }
        Ok(Self { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eval(&self, x: f64) -> f64 {
        let e = self.eps;
        if x.abs() >= e {
            return x.signum();
        }
        (x * (3.0 * e * e - x * x) / (2.0 * e * e * e)).clamp(-1.0, 1.0)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let e = self.eps;
        if x.abs() >= e {
            0.0
        } else {
            1.5 * (e * e - x * x) / (e * e * e)
        }
    }
}

/// `-exp(-iπ χ(E - μ))`, exactly one outside `(μ - ε, μ + ε)`.
fn boundary_phase(chi: &ChiFunction, e: f64) -> Complex64 {
    if e.abs() >= chi.eps {
        Complex64::new(1.0, 0.0)
    } else {
        -Complex64::cis(-PI * chi.eval(e))
    }
}

fn boundary_phase_derivative(chi: &ChiFunction, e: f64) -> Complex64 {
    Complex64::new(0.0, PI * chi.derivative(e)) * Complex64::cis(-PI * chi.eval(e))
}

/// Boundary unitary `-exp(-iπ χ(H - μ))` of a momentum slice.
pub fn boundary_unitary(slice: &MomentumSlice, chi: &ChiFunction, mu: f64) -> Result<Mat<Complex64>, DislocationError> {
    let e = eigh(&slice.matrix).map_err(|source| DislocationError::Eigen { kz: slice.kz, source })?;
    let n = e.dim();
    let mut u = Mat::<Complex64>::identity(n, n);
    for (k, &energy) in e.values.iter().enumerate() {
        let f = boundary_phase(chi, energy - mu) - 1.0;
        if f == Complex64::new(0.0, 0.0) {
            continue;
        }
        let v = e.vector(k);
        for j in 0..n {
            let vj = v[j].conj() * f;
            for i in 0..n {
                u[(i, j)] += v[i] * vj;
            }
        }
    }
    Ok(u)
}

/// Normalization of the bump `exp(-1/(1 - t²))` on `(-1, 1)`.
const BUMP_INTEGRAL: f64 = 0.443_993_816_168_079_4;

/// Smooth density supported on the window with unit integral.
fn window_density(window: &EnergyWindow, e: f64) -> f64 {
    let half = 0.5 * window.width();
    let t = (e - window.center()) / half;
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp() / (BUMP_INTEGRAL * half)
    }
}

/// Inputs of a kz sweep. `rho` is the core disk radius used for localization
/// weights and for the spatial cut of the trace functionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub kz_count: usize,
    pub mu: f64,
    pub rho: f64,
    /// Switching function for the winding integrand; `None` skips it.
    pub chi: Option<ChiFunction>,
    /// Energy window for the σ_screw integrand; `None` skips it.
    pub sigma_window: Option<EnergyWindow>,
    /// Drop the core disk from the trace functionals.
    pub full_trace: bool,
}

impl SweepSettings {
    pub fn new(kz_count: usize, mu: f64, rho: f64) -> Self {
        Self { kz_count, mu, rho, chi: None, sigma_window: None, full_trace: false }
    }

    /// χ of width half the distance to the bulk bands and a σ window of
    /// 60% of that distance on either side of μ.
    pub fn with_default_estimators(mut self, gap: &EnergyWindow) -> Result<Self, DislocationError> {
        let half = gap.half_width_at(self.mu);
        self.chi = Some(ChiFunction::new(0.5 * half)?);
        self.sigma_window = Some(EnergyWindow::around(self.mu, 0.6 * half));
        Ok(self)
    }
}

/// Window states of one slice.
#[derive(Clone, Debug)]
struct WindowSlice {
    energies: Vec<f64>,
    vectors: Mat<Complex64>,
    /// `[state][core]` probability inside each core disk.
    weights: Vec<Vec<f64>>,
}

/// Eigenvalue sweep over `kz_count` equally spaced momenta in `[0, 2π)`.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub kz_grid: Vec<f64>,
    /// Ascending eigenvalues per momentum.
    pub energies: Vec<Vec<f64>>,
    /// Probability of each state inside the union of the core disks.
    pub core_weights: Vec<Vec<f64>>,
    pub gap_window: EnergyWindow,
    pub mu: f64,
    pub rho: f64,
    pub cores: usize,
    slices: Vec<WindowSlice>,
    winding_integrand: Option<Vec<Complex64>>,
    sigma_integrand: Option<Vec<f64>>,
    sigma_window: Option<EnergyWindow>,
}

impl SpectralData {
    pub fn kz_count(&self) -> usize {
        self.kz_grid.len()
    }

    /// Distance from μ to the nearer end of the gap window.
    pub fn window_half_width(&self) -> f64 {
        self.gap_window.half_width_at(self.mu)
    }

    /// Number of eigenvalues below μ at each momentum.
    pub fn filling(&self) -> Vec<usize> {
        self.energies.iter().map(|e| e.partition_point(|v| *v < self.mu)).collect()
    }

    /// Eigenvalues strictly inside the gap window at momentum index `j`.
    pub fn window_energies(&self, j: usize) -> &[f64] {
        &self.slices[j].energies
    }

    /// Window states at `j` with their per-core weights.
    pub fn window_weights(&self, j: usize) -> &[Vec<f64>] {
        &self.slices[j].weights
    }

    pub fn winding_integrand(&self) -> Option<&[Complex64]> {
        self.winding_integrand.as_deref()
    }

    pub fn sigma_integrand(&self) -> Option<&[f64]> {
        self.sigma_integrand.as_deref()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kz,state_index,energy,core_weight\n");
        for (j, kz) in self.kz_grid.iter().enumerate() {
            for (s, (e, w)) in self.energies[j].iter().zip(&self.core_weights[j]).enumerate() {
                let _ = writeln!(out, "{kz},{s},{e},{w}");
            }
        }
        out
    }
}

/// Hamiltonian used for a sweep: the compressed lift when the lattice removes
/// a core disk, the plain lift otherwise.
pub fn dislocated_hamiltonian(
    model: &HoppingModel,
    lattice: &DislocatedLattice,
) -> Result<DislocatedHamiltonian, ModelError> {
    if lattice.core_removal_radius() > 0.0 {
        DislocatedHamiltonian::core_removed(model, lattice)
    } else {
        DislocatedHamiltonian::new(model, lattice)
    }
}

struct Geometry {
    /// Basis indices inside each core disk.
    disks: Vec<Vec<usize>>,
    union: Vec<usize>,
    /// Diagonal of the trace cut.
    trace_mask: Vec<f64>,
}

fn geometry(h: &DislocatedHamiltonian, rho: f64, full_trace: bool) -> Geometry {
    let lattice = h.lattice();
    let n = h.orbitals();
    let basis = |sites: Vec<usize>| sites.into_iter().flat_map(|s| (0..n).map(move |o| s * n + o)).collect::<Vec<_>>();
    let disks: Vec<Vec<usize>> = (0..lattice.cores().len())
        .map(|c| basis((0..lattice.len()).filter(|&s| lattice.core_distance(s, c) <= rho).collect()))
        .collect();
    let union = basis(
        (0..lattice.len())
            .filter(|&s| (0..lattice.cores().len()).any(|c| lattice.core_distance(s, c) <= rho))
            .collect(),
    );
    let mut trace_mask = vec![if full_trace { 1.0 } else { 0.0 }; h.dim()];
    if !full_trace {
        // the cut follows the first core, which sits on the axis column
        for &i in &disks[0] {
            trace_mask[i] = 1.0;
        }
    }
    Geometry { disks, union, trace_mask }
}

fn weight(v: &[Complex64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| v[i].norm_sqr()).sum::<f64>().min(1.0)
}

struct SliceResult {
    energies: Vec<f64>,
    core_weights: Vec<f64>,
    window: WindowSlice,
    winding: Option<Complex64>,
    sigma: Option<f64>,
}

/// `tr(Λ U† ∂U)` for `U = f(H)` via the divided-difference formula; only pairs
/// with an eigenvalue inside the χ ramp contribute.
fn winding_density(
    eig: &Eigen,
    dh: &crate::linalg::SparseMatrix,
    mask: &[f64],
    chi: &ChiFunction,
    mu: f64,
) -> Complex64 {
    let n = eig.dim();
    let ramp: Vec<usize> = (0..n).filter(|&k| (eig.values[k] - mu).abs() < chi.eps()).collect();
    if ramp.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    let lv = Mat::from_fn(n, ramp.len(), |i, s| eig.vectors[(i, ramp[s])] * mask[i]);
    let dv_cols: Vec<Vec<Complex64>> = ramp.iter().map(|&k| dh.matvec(eig.vector(k))).collect();
    let dv = Mat::from_fn(n, ramp.len(), |i, s| dv_cols[s][i]);
    // columns: ⟨b|Λ|s⟩ and ⟨b|∂H|s⟩ for every eigenvector b
    let w = eig.vectors.adjoint() * &lv;
    let m = eig.vectors.adjoint() * &dv;
    let f: Vec<Complex64> = eig.values.iter().map(|&e| boundary_phase(chi, e - mu)).collect();
    let gamma = |a: usize, b: usize| {
        let (ea, eb) = (eig.values[a], eig.values[b]);
        if (ea - eb).abs() < 1e-12 {
            boundary_phase_derivative(chi, ea - mu)
        } else {
            (f[a] - f[b]) / (ea - eb)
        }
    };
    let mut in_ramp = vec![usize::MAX; n];
    for (s, &k) in ramp.iter().enumerate() {
        in_ramp[k] = s;
    }
    let mut total = Complex64::new(0.0, 0.0);
    for (s, &a) in ramp.iter().enumerate() {
        // a in the ramp, any b: W_ba f̄_a Γ_ab M_ab
        let fa = f[a].conj();
        for b in 0..n {
            total += w[(b, s)] * fa * gamma(a, b) * m[(b, s)].conj();
        }
    }
    for (t, &b) in ramp.iter().enumerate() {
        // a outside the ramp (f_a = 1), b in it
        for a in 0..n {
            if in_ramp[a] != usize::MAX {
                continue;
            }
            total += w[(a, t)].conj() * gamma(a, b) * m[(a, t)];
        }
    }
    total
}

fn sweep_slice(
    h: &DislocatedHamiltonian,
    geo: &Geometry,
    settings: &SweepSettings,
    half_window: f64,
    kz: f64,
) -> Result<SliceResult, DislocationError> {
    let slice = h.at(kz);
    let eig = eigh(&slice.matrix).map_err(|source| DislocationError::Eigen { kz, source })?;
    let mu = settings.mu;
    let core_weights: Vec<f64> = (0..eig.dim()).map(|k| weight(eig.vector(k), &geo.union)).collect();
    let in_window: Vec<usize> = (0..eig.dim()).filter(|&k| (eig.values[k] - mu).abs() < half_window).collect();
    let window = WindowSlice {
        energies: in_window.iter().map(|&k| eig.values[k]).collect(),
        vectors: Mat::from_fn(eig.dim(), in_window.len(), |i, s| eig.vectors[(i, in_window[s])]),
        weights: in_window.iter().map(|&k| geo.disks.iter().map(|d| weight(eig.vector(k), d)).collect()).collect(),
    };
    let needs_derivative = settings.chi.is_some() || settings.sigma_window.is_some();
    let dh = needs_derivative.then(|| h.derivative(kz));
    let winding = settings.chi.map(|chi| winding_density(&eig, dh.as_ref().unwrap(), &geo.trace_mask, &chi, mu));
    let sigma = settings.sigma_window.map(|window| {
        let dh = dh.as_ref().unwrap();
        (0..eig.dim())
            .filter(|&k| window.contains(eig.values[k]))
            .map(|k| {
                let v = eig.vector(k);
                let g = window_density(&window, eig.values[k]);
                let hv = dh.matvec(v);
                let slope: Complex64 = (0..v.len()).map(|i| (v[i] * geo.trace_mask[i]).conj() * hv[i]).sum();
                g * slope.re
            })
            .sum()
    });
    Ok(SliceResult { energies: eig.values, core_weights, window, winding, sigma })
}

/// Full eigendecomposition of the dislocated Hamiltonian at every grid
/// momentum, in parallel over momenta.
pub fn kz_sweep(
    model: &HoppingModel,
    lattice: &DislocatedLattice,
    settings: &SweepSettings,
) -> Result<SpectralData, DislocationError> {
    if settings.kz_count < 16 {
        return Err(DislocationError::TooFewMomenta(settings.kz_count));
    }
    if settings.rho.is_nan() || settings.rho <= 0.0 {
        return Err(DislocationError::BadRadius(settings.rho));
    }
    let gap = gap_window(model, settings.mu)?;
    let half_window = gap.half_width_at(settings.mu);
    if let Some(chi) = settings.chi {
        if chi.eps() >= half_window {
            return Err(DislocationError::ChiTooWide { eps: chi.eps(), limit: half_window });
        }
    }
    if let Some(window) = settings.sigma_window {
        if !(gap.lo < window.lo && window.hi < gap.hi) || window.width() <= 0.0 {
            return Err(DislocationError::WindowOutsideGap { window, gap });
        }
    }
    let h = dislocated_hamiltonian(model, lattice)?;
    let geo = geometry(&h, settings.rho, settings.full_trace);
    let kz_grid: Vec<f64> = (0..settings.kz_count).map(|j| TAU * j as f64 / settings.kz_count as f64).collect();
    let results = kz_grid
        .par_iter()
        .map(|&kz| sweep_slice(&h, &geo, settings, half_window, kz))
        .collect::<Result<Vec<_>, _>>()?;
    let mut data = SpectralData {
        kz_grid,
        energies: Vec::with_capacity(results.len()),
        core_weights: Vec::with_capacity(results.len()),
        gap_window: gap,
        mu: settings.mu,
        rho: settings.rho,
        cores: geo.disks.len(),
        slices: Vec::with_capacity(results.len()),
        winding_integrand: settings.chi.map(|_| Vec::new()),
        sigma_integrand: settings.sigma_window.map(|_| Vec::new()),
        sigma_window: settings.sigma_window,
    };
    for r in results {
        data.energies.push(r.energies);
        data.core_weights.push(r.core_weights);
        data.slices.push(r.window);
        if let (Some(list), Some(v)) = (data.winding_integrand.as_mut(), r.winding) {
            list.push(v);
        }
        if let (Some(list), Some(v)) = (data.sigma_integrand.as_mut(), r.sigma) {
            list.push(v);
        }
    }
    Ok(data)
}

/// A group of matched branches that crosses μ between two adjacent momenta.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// The crossing happens between `kz_index` and the next grid point.
    pub kz_index: usize,
    /// `+1` per branch moving up through μ, `-1` per branch moving down.
    pub contribution: i64,
    /// Same count restricted to states localized at each core.
    pub localized: Vec<i64>,
    /// Largest weight of any member state in each core disk.
    pub core_weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowAnalysis {
    /// Flow of branches localized at each core.
    pub per_core: Vec<i64>,
    /// Flow of every branch, localized or not.
    pub unfiltered: i64,
    pub crossings: Vec<Crossing>,
    pub weight_threshold: f64,
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Labels runs of degenerate energies (sorted input) with group ids.
fn degenerate_groups(energies: &[f64]) -> (Vec<usize>, usize) {
    let mut ids = Vec::with_capacity(energies.len());
    let mut next = 0;
    for (k, &e) in energies.iter().enumerate() {
        if k > 0 && (e - energies[k - 1]).abs() > DEGENERACY_TOL * e.abs().max(1.0) {
            next += 1;
        }
        ids.push(next);
    }
    let count = if energies.is_empty() { 0 } else { next + 1 };
    (ids, count)
}

fn step_crossings(
    data: &SpectralData,
    j: usize,
    filling: &[usize],
    weight_threshold: f64,
) -> Result<Vec<Crossing>, DislocationError> {
    let k = data.kz_count();
    let next = (j + 1) % k;
    let (left, right) = (&data.slices[j], &data.slices[next]);
    let mu = data.mu;
    let zone = 0.5 * data.window_half_width();
    let in_zone = |e: f64| (e - mu).abs() < zone;
    let counted = filling[j] as i64 - filling[next] as i64;

    let overlap = left.vectors.adjoint() * &right.vectors;
    let (nl, nr) = (left.energies.len(), right.energies.len());
    let sq = |a: usize, b: usize| overlap[(a, b)].norm_sqr();
    // weight each state keeps inside the other window
    let forward: Vec<f64> = (0..nl).map(|a| (0..nr).map(|b| sq(a, b)).sum()).collect();
    let backward: Vec<f64> = (0..nr).map(|b| (0..nl).map(|a| sq(a, b)).sum()).collect();
    let zone_states = (0..nl)
        .filter(|&a| in_zone(left.energies[a]))
        .map(|a| forward[a])
        .chain((0..nr).filter(|&b| in_zone(right.energies[b])).map(|b| backward[b]));
    for total in zone_states {
        if total < CONTINUATION_OVERLAP {
            return Err(DislocationError::AmbiguousMatching { kz_index: j, overlap: total });
        }
    }

    let (gl, ngl) = degenerate_groups(&left.energies);
    let (gr, ngr) = degenerate_groups(&right.energies);
    let mut agg = vec![0.0; ngl * ngr];
    for a in 0..nl {
        for b in 0..nr {
            agg[gl[a] * ngr + gr[b]] += sq(a, b);
        }
    }
    let mut sets = DisjointSets::new(ngl + ngr);
    for p in 0..ngl {
        for q in 0..ngr {
            if agg[p * ngr + q] >= LINK_OVERLAP {
                sets.union(p, ngl + q);
            }
        }
    }

    // States leaving or entering the window break the count on their side of
    // μ, so each group is counted on the side where it is closed.
    #[derive(Default)]
    struct Component {
        touches_zone: bool,
        leaks_below: bool,
        leaks_above: bool,
        min_leak: f64,
        /// Left minus right, for all states and per core.
        below: i64,
        localized_below: Vec<i64>,
        /// Right minus left.
        above: i64,
        localized_above: Vec<i64>,
        weights: Vec<f64>,
    }
    let cores = data.cores;
    let mut components: std::collections::BTreeMap<usize, Component> = std::collections::BTreeMap::new();
    let mut visit = |root: usize, e: f64, left_side: bool, w: &[f64], kept: f64| {
        let c = components.entry(root).or_insert_with(|| Component {
            min_leak: f64::INFINITY,
            localized_below: vec![0; cores],
            localized_above: vec![0; cores],
            weights: vec![0.0; cores],
            ..Component::default()
        });
        c.touches_zone |= in_zone(e);
        if kept < CONTINUATION_OVERLAP {
            if e < mu {
                c.leaks_below = true;
            } else {
                c.leaks_above = true;
            }
            c.min_leak = c.min_leak.min(kept);
        }
        let sign = if left_side { 1 } else { -1 };
        let (total, localized) = if e < mu {
            (&mut c.below, &mut c.localized_below)
        } else {
            (&mut c.above, &mut c.localized_above)
        };
        let sign = if e < mu { sign } else { -sign };
        *total += sign;
        for (count, &wc) in localized.iter_mut().zip(w) {
            if wc > weight_threshold {
                *count += sign;
            }
        }
        for (acc, v) in c.weights.iter_mut().zip(w) {
            *acc = acc.max(*v);
        }
    };
    for a in 0..nl {
        let root = sets.find(gl[a]);
        visit(root, left.energies[a], true, &left.weights[a], forward[a]);
    }
    for b in 0..nr {
        let root = sets.find(ngl + gr[b]);
        visit(root, right.energies[b], false, &right.weights[b], backward[b]);
    }
    let mut crossings = Vec::new();
    for c in components.into_values().filter(|c| c.touches_zone) {
        let (contribution, localized) = match (c.leaks_below, c.leaks_above) {
            (true, true) => return Err(DislocationError::AmbiguousMatching { kz_index: j, overlap: c.min_leak }),
            (true, false) => (c.above, c.localized_above),
            _ => (c.below, c.localized_below),
        };
        if contribution != 0 || localized.iter().any(|&l| l != 0) {
            crossings.push(Crossing { kz_index: j, contribution, localized, core_weights: c.weights });
        }
    }
    let matched: i64 = crossings.iter().map(|c| c.contribution).sum();
    if matched != counted {
        return Err(DislocationError::CountMismatch { kz_index: j, matched, counted });
    }
    Ok(crossings)
}

/// Tracks window branches between adjacent momenta by eigenvector overlap and
/// counts their signed μ-crossings. Within each group of matched states that
/// reaches the crossing zone, states holding more than `weight_threshold` of
/// their weight in a core disk are counted separately for that core, so a core
/// branch is resolved even where it hybridizes with an edge branch crossing
/// the other way.
pub fn flow_analysis(data: &SpectralData, weight_threshold: f64) -> Result<FlowAnalysis, DislocationError> {
    let filling = data.filling();
    let steps = (0..data.kz_count())
        .into_par_iter()
        .map(|j| step_crossings(data, j, &filling, weight_threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let crossings: Vec<Crossing> = steps.into_iter().flatten().collect();
    let mut per_core = vec![0; data.cores];
    for c in &crossings {
        for (flow, l) in per_core.iter_mut().zip(&c.localized) {
            *flow += l;
        }
    }
    let unfiltered = crossings.iter().map(|c| c.contribution).sum();
    Ok(FlowAnalysis { per_core, unfiltered, crossings, weight_threshold })
}

/// Signed flow of branches localized at the dislocation on the axis column.
pub fn spectral_flow(data: &SpectralData, weight_threshold: f64) -> Result<i64, DislocationError> {
    Ok(flow_analysis(data, weight_threshold)?.per_core[0])
}

/// Real-valued index estimate and its distance to the nearest integer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub nearest: i64,
    pub distance: f64,
}

impl Estimate {
    fn checked(value: f64) -> Result<Self, DislocationError> {
        let nearest = value.round();
        let distance = (value - nearest).abs();
        if distance >= 0.25 {
            return Err(DislocationError::NoConvergence { value, distance });
        }
        Ok(Self { value, nearest: nearest as i64, distance })
    }
}

/// `(1/2πi) ∮ tr(Λ U† ∂U) dkz`, oriented so that a branch moving up through μ
/// counts `+1`.
pub fn localized_winding(data: &SpectralData) -> Result<Estimate, DislocationError> {
    let integrand = data.winding_integrand().ok_or(DislocationError::MissingIntegrand("winding"))?;
    let sum: Complex64 = integrand.iter().sum();
    let raw = sum / Complex64::new(0.0, integrand.len() as f64);
    Estimate::checked(-raw.re)
}

/// Smoothed-window σ_screw in units of e²/h, oriented like [`localized_winding`].
pub fn sigma_screw(data: &SpectralData) -> Result<Estimate, DislocationError> {
    let integrand = data.sigma_integrand().ok_or(DislocationError::MissingIntegrand("sigma"))?;
    let window = data.sigma_window.expect("sigma integrand implies a window");
    let mean_levels = data.energies.iter().map(|e| e.iter().filter(|v| window.contains(**v)).count()).sum::<usize>()
        as f64
        / data.kz_count() as f64;
    if mean_levels > 0.0 && mean_levels < 4.0 {
        return Err(DislocationError::TooFewLevels { mean: mean_levels });
    }
    let dk = TAU / integrand.len() as f64;
    Estimate::checked(integrand.iter().sum::<f64>() * dk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, Boundary};
    use crate::linalg::unitarity_defect;
    use crate::models::{trivial, qwz_stack, Plane};

    fn open(l: i64) -> DislocatedLattice {
        build_lattice(l, Boundary::Open, 0.0, BurgersFrame::identity()).unwrap()
    }

    #[test]
    fn chi_shape() {
        let chi = ChiFunction::new(0.4).unwrap();
        assert_eq!(chi.eval(-0.4), -1.0);
        assert_eq!(chi.eval(1.0), 1.0);
        assert_eq!(chi.eval(0.0), 0.0);
        for x in [0.05, 0.13, 0.31, 0.39] {
            assert_eq!(chi.eval(-x), -chi.eval(x));
            assert!(chi.eval(x) > 0.0 && chi.eval(x) < 1.0);
            let h = 1e-6;
            let fd = (chi.eval(x + h) - chi.eval(x - h)) / (2.0 * h);
            assert!((fd - chi.derivative(x)).abs() < 1e-6);
        }
        assert!(ChiFunction::new(0.0).is_err());
    }

    #[test]
    fn bump_is_normalized() {
        let w = EnergyWindow::new(-0.3, 0.5);
        let n = 200_000;
        let h = w.width() / n as f64;
        let integral: f64 = (0..n).map(|i| window_density(&w, w.lo + (i as f64 + 0.5) * h) * h).sum();
        assert!((integral - 1.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_unitary_cases() {
        let lat = open(3);
        let chi = ChiFunction::new(0.5).unwrap();
        let triv = crate::models::assemble_dislocated(&trivial(2, 1.0).unwrap(), &lat, 0.7).unwrap();
        let u = boundary_unitary(&triv, &chi, 0.0).unwrap();
        assert_eq!(u, Mat::identity(u.nrows(), u.ncols()));

        let zero = MomentumSlice {
            kz: 0.0,
            orbitals: 1,
            matrix: crate::linalg::HermitianMatrix::from_fn(2, |i, j| {
                Complex64::new(if i == j && i == 1 { 2.0 } else { 0.0 }, 0.0)
            }),
        };
        let u = boundary_unitary(&zero, &chi, 0.0).unwrap();
        assert!((u[(0, 0)] + 1.0).norm() < 1e-15);
        assert_eq!(u[(1, 1)], Complex64::new(1.0, 0.0));

        let q = crate::models::assemble_dislocated(&qwz_stack(-1.0, Plane::Xy).unwrap(), &open(5), 1.3).unwrap();
        let u = boundary_unitary(&q, &chi, 0.0).unwrap();
        assert!(unitarity_defect(&u) <= 1e-10);
    }

    #[test]
    fn trivial_sweep_is_empty() {
        let settings = SweepSettings::new(16, 0.0, 2.0)
            .with_default_estimators(&EnergyWindow::new(-1.0, 1.0))
            .unwrap();
        let data = kz_sweep(&trivial(2, 1.0).unwrap(), &open(4), &settings).unwrap();
        assert!((0..16).all(|j| data.window_energies(j).is_empty()));
        let flow = flow_analysis(&data, 0.5).unwrap();
        assert_eq!((flow.per_core.clone(), flow.unfiltered), (vec![0], 0));
        assert_eq!(localized_winding(&data).unwrap().value, 0.0);
        assert_eq!(sigma_screw(&data).unwrap().value, 0.0);
    }

    #[test]
    fn periodic_endpoints_agree() {
        let model = qwz_stack(-1.0, Plane::Xy).unwrap();
        let h = DislocatedHamiltonian::new(&model, &open(4)).unwrap();
        let a = eigh(&h.at(0.0).matrix).unwrap().values;
        let b = eigh(&h.at(TAU).matrix).unwrap().values;
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-10));
    }

    #[test]
    fn degenerate_grouping() {
        let (ids, n) = degenerate_groups(&[-0.5, -0.5, 0.1, 0.1 + 1e-12, 0.3]);
        assert_eq!((ids, n), (vec![0, 0, 1, 1, 2], 3));
        assert_eq!(degenerate_groups(&[]).1, 0);
    }

    #[test]
    fn small_qwz_flow_is_consistent() {
        let model = qwz_stack(-1.0, Plane::Xy).unwrap();
        let lattice = open(6);
        let gap = gap_window(&model, 0.0).unwrap();
        let settings = SweepSettings::new(48, 0.0, 3.0).with_default_estimators(&gap).unwrap();
        let data = kz_sweep(&model, &lattice, &settings).unwrap();
        let flow = flow_analysis(&data, 0.5).unwrap();
        assert_eq!(flow.unfiltered, 0);
        let weak = crate::invariants::weak_vector(&model, 0.0, 16).unwrap();
        assert_eq!(flow.per_core[0], predicted_flow(&weak, lattice.frame()));
        assert_eq!(flow.per_core[0], localized_winding(&data).unwrap().nearest);
        assert_eq!(flow.per_core[0], sigma_screw(&data).unwrap().nearest);
        let csv = data.to_csv();
        assert!(csv.starts_with("kz,state_index,energy,core_weight\n"));
        assert_eq!(csv.lines().count(), 1 + 48 * lattice.len() * 2);
    }
}
