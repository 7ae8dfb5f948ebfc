//! The five subcommands. Each fills an [`InvariantReport`] and the tables it
//! emits; persistence lives in `store`.

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use screwlab::coarselift::{multiplicativity_defect, norm_bound_check, FlatKernel};
use screwlab::dislocation::{
    flow_analysis, gap_window, kz_sweep, localized_winding, predicted_flow, sigma_screw, ChiFunction, SpectralData,
    SweepSettings,
};
use screwlab::invariants::{chern_lattice, chern_weil, WeakVector};
use screwlab::models::Plane;

use crate::config::{ConfigError, Resolved};
use crate::report::{Agreement, Flow, InvariantReport, LiftStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Bulk,
    Dislocation,
    Verify,
    Predict,
    LiftTest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bulk => "bulk-invariants",
            Command::Dislocation => "dislocation-spectrum",
            Command::Verify => "verify",
            Command::Predict => "predict",
            Command::LiftTest => "lift-test",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn numerical(e: impl ToString) -> RunError {
    RunError::Numerical(e.to_string())
}

pub struct Outcome {
    pub report: InvariantReport,
    pub tables: Vec<(String, String)>,
}

pub fn run(command: Command, cfg: &Resolved) -> Result<Outcome, RunError> {
    let mut out = Outcome {
        report: InvariantReport::new(command.name(), &cfg.hash, cfg.config.numerics.seed),
        tables: Vec::new(),
    };
    match command {
        Command::Bulk => {
            bulk(cfg, &mut out)?;
        }
        Command::Predict => {
            let weak = bulk(cfg, &mut out)?;
            out.report.predicted_index = Some(predicted_flow(&weak, cfg.lattice.frame()));
        }
        Command::Dislocation => dislocation(cfg, &mut out)?,
        Command::Verify => {
            let weak = bulk(cfg, &mut out)?;
            let predicted = predicted_flow(&weak, cfg.lattice.frame());
            out.report.predicted_index = Some(predicted);
            dislocation(cfg, &mut out)?;
            let r = &out.report;
            let flow = r.spectral_flow.expect("dislocation sets the flow");
            out.report.agreement =
                Some(Agreement::check(flow, predicted, r.localized_winding.as_ref(), r.sigma_screw.as_ref()));
        }
        Command::LiftTest => lift_test(cfg, &mut out)?,
    }
    Ok(out)
}

fn bulk(cfg: &Resolved, out: &mut Outcome) -> Result<WeakVector, RunError> {
    let start = Instant::now();
    let n = &cfg.config.numerics;
    let mut weak = [0; 3];
    let mut table = String::from("plane,method,grid,value_integral,value_integer\n");
    for (slot, plane) in weak.iter_mut().zip(Plane::ALL) {
        let lattice = chern_lattice(&cfg.model, plane, n.mu, n.grid).map_err(numerical)?;
        let weil = chern_weil(&cfg.model, plane, n.mu, n.grid).map_err(numerical)?;
        if weil.value_integer != lattice.value_integer {
            return Err(RunError::Numerical(format!(
                "{plane:?} plane: curvature integral gives {} but plaquette fluxes give {}; refine the grid",
                weil.value_integer, lattice.value_integer
            )));
        }
        *slot = lattice.value_integer;
        for r in [lattice, weil] {
            let method = serde_json::to_value(r.method).expect("method serializes");
            let plane = serde_json::to_value(r.plane).expect("plane serializes");
            let (plane, method) = (plane.as_str().unwrap_or_default(), method.as_str().unwrap_or_default());
            writeln!(table, "{plane},{method},{},{:.12},{}", r.grid, r.value_integral, r.value_integer)
                .expect("string write");
            out.report.chern.push(r);
        }
    }
    out.report.weak_vector = Some(WeakVector(weak));
    out.report.timings.insert("bulk".into(), start.elapsed().as_secs_f64());
    out.tables.push(("invariants.csv".into(), table));
    Ok(WeakVector(weak))
}

fn sweep_settings(cfg: &Resolved) -> Result<SweepSettings, RunError> {
    let n = &cfg.config.numerics;
    let gap = gap_window(&cfg.model, n.mu).map_err(numerical)?;
    let mut settings = SweepSettings::new(n.kz_count, n.mu, n.rho).with_default_estimators(&gap).map_err(numerical)?;
    if let Some(eps) = n.epsilon {
        settings.chi = Some(ChiFunction::new(eps).map_err(numerical)?);
    }
    if let Some(window) = cfg.sigma_window() {
        settings.sigma_window = Some(window);
    }
    Ok(settings)
}

fn dislocation(cfg: &Resolved, out: &mut Outcome) -> Result<(), RunError> {
    let start = Instant::now();
    let settings = sweep_settings(cfg)?;
    let data: SpectralData = kz_sweep(&cfg.model, &cfg.lattice, &settings).map_err(numerical)?;
    out.report.timings.insert("sweep".into(), start.elapsed().as_secs_f64());

    let threshold = cfg.config.numerics.weight_threshold;
    let analysis = flow_analysis(&data, threshold).map_err(numerical)?;
    let flow = analysis.per_core[0];
    out.report.spectral_flow = Some(flow);
    out.report.flow = Some(Flow {
        spectral_flow: flow,
        per_core: analysis.per_core,
        unfiltered: analysis.unfiltered,
        weight_threshold: threshold,
        gap_window: data.gap_window,
    });
    match localized_winding(&data) {
        Ok(e) => out.report.localized_winding = Some(e),
        Err(e) => out.report.notes.push(format!("localized_winding: {e}")),
    }
    match sigma_screw(&data) {
        Ok(e) => out.report.sigma_screw = Some(e),
        Err(e) => out.report.notes.push(format!("sigma_screw: {e}")),
    }
    out.tables.push(("spectra.csv".into(), data.to_csv()));
    Ok(())
}

/// Kernel pairs cycle through every `(R, S)` up to the configured maximum;
/// momenta follow a golden-ratio sequence.
fn lift_test(cfg: &Resolved, out: &mut Outcome) -> Result<(), RunError> {
    let start = Instant::now();
    let lattice = &cfg.lattice;
    if lattice.is_periodic() || lattice.core_removal_radius() > 0.0 {
        return Err(ConfigError::Invalid {
            field: "lattice",
            message: "lift-test needs an open lattice without core removal".into(),
        }
        .into());
    }
    let max = cfg.config.lift.max_propagation;
    let half_width = lattice.half_width();
    if i64::from(2 * max) >= half_width {
        return Err(ConfigError::Invalid {
            field: "lift.max_propagation",
            message: format!("2·{max} must stay below the half width {half_width}"),
        }
        .into());
    }
    let trials = cfg.config.lift.trials;
    let seed = cfg.config.numerics.seed;
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut stats = LiftStats {
        trials,
        norm_bound_failures: 0,
        support_failures: 0,
        max_bound_ratio: 0.0,
        max_radius_excess: f64::NEG_INFINITY,
        max_defect_entry: 0.0,
    };
    let choices = u64::from(max) + 1;
    for trial in 0..trials as u64 {
        let r = (trial % choices) as f64;
        let s = ((trial / choices) % choices) as f64;
        let kz = std::f64::consts::TAU * ((trial as f64 + 1.0) * golden).fract();
        let base = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(2 * trial);
        let k = FlatKernel::random(half_width, r, base);
        let l = FlatKernel::random(half_width, s, base + 1);
        let nb = norm_bound_check(&k, lattice, kz).map_err(numerical)?;
        if !nb.holds() {
            stats.norm_bound_failures += 1;
        }
        if nb.bound > 0.0 {
            stats.max_bound_ratio = stats.max_bound_ratio.max(nb.lifted / nb.bound);
        }
        let defect = multiplicativity_defect(&k, &l, lattice, kz).map_err(numerical)?;
        if !defect.within_slack() {
            stats.support_failures += 1;
        }
        stats.max_radius_excess = stats.max_radius_excess.max(defect.radius - defect.budget);
        stats.max_defect_entry = stats.max_defect_entry.max(defect.max_entry);
    }
    out.report.lift = Some(stats);
    out.report.timings.insert("lift".into(), start.elapsed().as_secs_f64());
    Ok(())
}
