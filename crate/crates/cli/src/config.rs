//! Run configuration: parsing with field paths, validation, and the content hash
//! that keys the cache.

use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use screwlab::dislocation::EnergyWindow;
use screwlab::lattice::{build_lattice, burgers_frame, Boundary, DislocatedLattice};
use screwlab::models::{BuiltinModel, Disorder, HoppingModel, ModelDocument};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: field `{field}`: {message}")]
    Parse { path: PathBuf, field: String, message: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid { field, message: message.to_string() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Builtin(BuiltinModel),
    /// Path to a model document, relative to the config file.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub half_width: i64,
    #[serde(default = "open_boundary")]
    pub boundary: Boundary,
    #[serde(default)]
    pub core_removal_radius: f64,
    #[serde(default = "z_axis")]
    pub burgers: [i64; 3],
}

fn open_boundary() -> Boundary {
    Boundary::Open
}

fn z_axis() -> [i64; 3] {
    [0, 0, 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub kz_count: usize,
    /// Brillouin grid per direction for Chern numbers.
    pub grid: usize,
    pub mu: f64,
    /// Width of the switching function; half the distance to the bulk bands
    /// when absent.
    pub epsilon: Option<f64>,
    /// Energy window of the conductance estimator; `μ ± 0.6·half-gap` when absent.
    pub sigma_window: Option<[f64; 2]>,
    pub rho: f64,
    pub weight_threshold: f64,
    pub disorder: f64,
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            kz_count: 64,
            grid: 64,
            mu: 0.0,
            epsilon: None,
            sigma_window: None,
            rho: 6.0,
            weight_threshold: 0.5,
            disorder: 0.0,
            seed: 0,
        }
    }
}

/// Parameters of `lift-test`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    pub trials: usize,
    pub max_propagation: u32,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self { trials: 100, max_propagation: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Json, Format::Csv] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub lift: LiftConfig,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub kz_count: Option<usize>,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
}

/// A validated configuration with its model and lattice built.
#[derive(Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: HoppingModel,
    pub lattice: DislocatedLattice,
    /// Hex form of [`config_hash`].
    pub hash: String,
}

pub fn parse(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: path.to_owned(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
    let mut config = parse(&text, path)?;
    if let Some(out) = &overrides.out {
        config.outputs.directory = out.clone();
    }
    if let Some(k) = overrides.kz_count {
        config.numerics.kz_count = k;
    }
    if let Some(n) = overrides.grid {
        config.numerics.grid = n;
    }
    if let Some(seed) = overrides.seed {
        config.numerics.seed = seed;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    resolve(config, base)
}

fn read_model(spec: &ModelSpec, base: &Path) -> Result<HoppingModel, ConfigError> {
    match spec {
        ModelSpec::Builtin(b) => b.build().map_err(|e| invalid("model", e)),
        ModelSpec::File(file) => {
            let path = base.join(file);
            let text =
                std::fs::read_to_string(&path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let doc: ModelDocument = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
                path: path.clone(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
            HoppingModel::from_document(&doc).map_err(|e| invalid("model", e))
        }
    }
}

/// Checks every constraint that does not need a diagonalization.
pub fn resolve(config: RunConfig, base: &Path) -> Result<Resolved, ConfigError> {
    let n = &config.numerics;
    if n.kz_count < 16 {
        return Err(invalid("numerics.kz_count", format!("need at least 16 momenta, got {}", n.kz_count)));
    }
    if n.grid < 4 {
        return Err(invalid("numerics.grid", format!("need at least 4 points per direction, got {}", n.grid)));
    }
    if !n.mu.is_finite() {
        return Err(invalid("numerics.mu", "must be finite"));
    }
    if let Some(eps) = n.epsilon {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(invalid("numerics.epsilon", format!("must be positive, got {eps}")));
        }
    }
    if let Some([lo, hi]) = n.sigma_window {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("numerics.sigma_window", format!("need lo < hi, got [{lo}, {hi}]")));
        }
    }
    if !(n.weight_threshold > 0.0 && n.weight_threshold < 1.0) {
        return Err(invalid("numerics.weight_threshold", format!("must lie in (0, 1), got {}", n.weight_threshold)));
    }
    let half_width = config.lattice.half_width;
    if !(n.rho > 0.0 && n.rho <= half_width as f64) {
        return Err(invalid("numerics.rho", format!("must lie in (0, {half_width}], got {}", n.rho)));
    }
    if config.lift.trials == 0 {
        return Err(invalid("lift.trials", "must be positive"));
    }
    let mut model = read_model(&config.model, base)?;
    if n.disorder != 0.0 {
        let disorder = Disorder { strength: n.disorder, seed: n.seed };
        model = model.with_disorder(disorder).map_err(|e| invalid("numerics.disorder", e))?;
    }
    let frame = burgers_frame(config.lattice.burgers).map_err(|e| invalid("lattice.burgers", e))?;
    let lattice = build_lattice(half_width, config.lattice.boundary, config.lattice.core_removal_radius, frame)
        .map_err(|e| invalid("lattice", e))?;
    let hash = format!("{:016x}", config_hash(&config, &model));
    Ok(Resolved { config, model, lattice, hash })
}

/// Canonical JSON: object keys sorted, no whitespace, output settings left out
/// and the model replaced by its document so a file and its contents hash alike.
pub fn canonical_json(config: &RunConfig, model: &HoppingModel) -> String {
    let mut value = serde_json::to_value(config).expect("config serializes");
    let object = value.as_object_mut().expect("config is an object");
    object.remove("outputs");
    object.insert("model".into(), serde_json::to_value(model.to_document()).expect("model serializes"));
    // serde_json's default map is ordered by key
    value.to_string()
}

/// 64-bit FNV-1a of the canonical JSON.
pub fn config_hash(config: &RunConfig, model: &HoppingModel) -> u64 {
    let mut h = FnvHasher::default();
    h.write(canonical_json(config, model).as_bytes());
    h.finish()
}

impl Resolved {
    pub fn sigma_window(&self) -> Option<EnergyWindow> {
        self.config.numerics.sigma_window.map(|[lo, hi]| EnergyWindow::new(lo, hi))
    }
}
