use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use screwlab::dislocation::{Estimate, EnergyWindow};
use screwlab::invariants::{ChernResult, WeakVector};

/// Estimators may differ from the flow by less than this.
pub const AGREEMENT_TOL: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub localized_winding: bool,
    pub sigma_screw: bool,
    pub predicted_index: bool,
    pub all: bool,
}

impl Agreement {
    /// A missing estimate never agrees.
    pub fn check(flow: i64, predicted: i64, winding: Option<&Estimate>, sigma: Option<&Estimate>) -> Self {
        let close = |e: Option<&Estimate>| e.is_some_and(|e| (e.value - flow as f64).abs() < AGREEMENT_TOL);
        let localized_winding = close(winding);
        let sigma_screw = close(sigma);
        let predicted_index = predicted == flow;
        Self { localized_winding, sigma_screw, predicted_index, all: localized_winding && sigma_screw && predicted_index }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub spectral_flow: i64,
    /// Flow through μ at each core.
    pub per_core: Vec<i64>,
    /// Count over every state; zero on any finite lattice.
    pub unfiltered: i64,
    pub weight_threshold: f64,
    pub gap_window: EnergyWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftStats {
    pub trials: usize,
    pub norm_bound_failures: usize,
    pub support_failures: usize,
    /// Largest `‖lift(K)‖ / bound` seen.
    pub max_bound_ratio: f64,
    /// Largest defect radius minus `R + S`.
    pub max_radius_excess: f64,
    pub max_defect_entry: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_vector: Option<WeakVector>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub chern: Vec<ChernResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_index: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<Flow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_flow: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub localized_winding: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_screw: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<Agreement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftStats>,
    /// Estimators that could not be evaluated, with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

impl InvariantReport {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: config_hash.to_owned(),
            seed,
            ..Self::default()
        }
    }

    /// Whether the run backs the correspondence it checked; `None` when the
    /// command makes no such claim.
    pub fn agrees(&self) -> Option<bool> {
        if let Some(a) = self.agreement {
            return Some(a.all);
        }
        self.lift.as_ref().map(|l| l.norm_bound_failures == 0 && l.support_failures == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn estimate(value: f64) -> Estimate {
        Estimate { value, nearest: value.round() as i64, distance: (value - value.round()).abs() }
    }

    #[test]
    fn agreement_needs_every_part() {
        let check = |f, p, w, s| Agreement::check(f, p, Some(&estimate(w)), Some(&estimate(s)));
        assert!(check(-1, -1, -0.95, -1.02).all);
        assert!(!check(-1, -1, -0.85, -1.0).all);
        assert!(!check(-1, 1, -1.0, -1.0).all);
        assert!(check(0, 0, 0.0, 0.05).all);
        let missing = Agreement::check(0, 0, Some(&estimate(0.0)), None);
        assert!(missing.localized_winding && !missing.sigma_screw && !missing.all);
    }

    #[test]
    fn optional_fields_are_omitted() {
        let r = InvariantReport::new("predict", "00", 3);
        let v = serde_json::to_value(&r).unwrap();
        assert!(v.get("spectral_flow").is_none());
        assert_eq!(v["seed"], 3);
        let back: InvariantReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
