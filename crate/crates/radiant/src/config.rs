//! Run configuration: a versioned JSON schema with environment-variable
//! overrides (`RADIANT_` + upper-cased key path, e.g. `RADIANT_SOLVER_TOL`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::quadrature::QuadraturePreset;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected 1)")]
    SchemaVersion(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment override {var}: no matching config key")]
    UnknownOverride { var: String },
    #[error("environment override {var}: {message}")]
    BadOverride { var: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeshConfig {
    /// Box (0,H)×(−L,L)² with n subdivisions per unit length on every axis.
    Box { l: f64, h: f64, n: usize },
    /// Box (0,H)×(−L,L)² with nx cells vertically and nt across each
    /// transverse direction.
    Slab { l: f64, h: f64, nx: usize, nt: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProfileConfig {
    Constant { value: f64 },
    AffineX { base: f64, slope: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandEditConfig {
    pub lambda_min_um: f64,
    pub lambda_max_um: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpectrumConfig {
    /// Frequency-independent absorption (one exact level).
    Grey { kappa: f64 },
    /// Two-column file (wavelength µm, κ̃) quantized to few levels.
    Csv {
        path: PathBuf,
        #[serde(default = "default_levels")]
        quantize_levels: usize,
        #[serde(default)]
        band_edits: Vec<BandEditConfig>,
    },
}

fn default_levels() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermConfig {
    pub profile: ProfileConfig,
    pub spectrum: SpectrumConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudConfig {
    pub center_y: f64,
    pub center_z: f64,
    pub radius: f64,
    pub altitude_min: f64,
    pub altitude_max: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbsorptionConfig {
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub cloud: Option<CloudConfig>,
    /// Constant single-scattering albedo (0 disables scattering).
    #[serde(default)]
    pub albedo: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FrequencyGridConfig {
    /// 683 uniform nodes on (0, 16].
    Default,
    Uniform { nu_max: f64, nodes: usize },
    Geometric { lo: f64, hi: f64, nodes: usize },
}

impl Default for FrequencyGridConfig {
    fn default() -> Self {
        FrequencyGridConfig::Default
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnowConfig {
    pub beta: f64,
    pub h_snow: f64,
}

/// Sun position as rotation angles applied to the ground normals in the
/// incidence cosine: `xy_deg` rotates in the (x, y) plane (about z),
/// `xz_deg` in the (x, z) plane (about y).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SunAnglesConfig {
    #[serde(default)]
    pub xy_deg: f64,
    #[serde(default)]
    pub xz_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceConfig {
    pub q0: f64,
    pub t_sun: f64,
    #[serde(default = "default_sun_direction")]
    pub sun_direction: [f64; 3],
    #[serde(default)]
    pub snow: Option<SnowConfig>,
    #[serde(default)]
    pub sun_angles: Option<SunAnglesConfig>,
    /// Extra source-only variants solved with the same operators.
    #[serde(default)]
    pub variants: Vec<SourceVariantConfig>,
}

fn default_sun_direction() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceVariantConfig {
    pub name: String,
    #[serde(default)]
    pub q0: Option<f64>,
    #[serde(default)]
    pub snow: Option<SnowConfig>,
    #[serde(default)]
    pub sun_angles: Option<SunAnglesConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmatConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_leaf_max")]
    pub leaf_max: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: QuadraturePreset,
}

fn default_epsilon() -> f64 {
    1e-3
}
fn default_eta() -> f64 {
    10.0
}
fn default_leaf_max() -> usize {
    64
}
fn default_quadrature() -> QuadraturePreset {
    QuadraturePreset::Standard
}

impl Default for HmatConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            eta: default_eta(),
            leaf_max: default_leaf_max(),
            quadrature: default_quadrature(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfigSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub t_init: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub bracketing: bool,
    #[serde(default = "default_bracket_low")]
    pub bracket_low: f64,
    #[serde(default = "default_bracket_high")]
    pub bracket_high: f64,
}

fn default_tol() -> f64 {
    1e-11
}
fn default_max_iters() -> usize {
    200
}
fn default_t_max() -> f64 {
    2.0
}
fn default_bracket_low() -> f64 {
    0.01
}
fn default_bracket_high() -> f64 {
    0.12
}

impl Default for SolverConfigSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iters: default_max_iters(),
            t_init: 0.0,
            t_max: default_t_max(),
            bracketing: false,
            bracket_low: default_bracket_low(),
            bracket_high: default_bracket_high(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileOutputConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OutputConfig {
    #[serde(default)]
    pub vtk: Option<PathBuf>,
    /// Also write the per-bin aggregated mean intensities into the VTK file.
    #[serde(default)]
    pub jbar_vtk: bool,
    #[serde(default)]
    pub profile: Option<ProfileOutputConfig>,
    #[serde(default = "default_report")]
    pub report: Option<PathBuf>,
}

fn default_report() -> Option<PathBuf> {
    Some(PathBuf::from("report.json"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub mesh: MeshConfig,
    pub absorption: AbsorptionConfig,
    #[serde(default)]
    pub frequency_grid: FrequencyGridConfig,
    pub source: SourceConfig,
    #[serde(default)]
    pub hmat: HmatConfig,
    #[serde(default)]
    pub solver: SolverConfigSection,
    #[serde(default = "default_resolution")]
    pub grid_resolution: [usize; 3],
    #[serde(default = "default_ground_labels")]
    pub ground_labels: Vec<i32>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_resolution() -> [usize; 3] {
    [128, 128, 128]
}

fn default_ground_labels() -> Vec<i32> {
    vec![1]
}

impl RunConfig {
    /// Load from a JSON file, apply `RADIANT_*` environment overrides, and
    /// validate. The config is round-tripped through its default-completed
    /// form first, so overrides can target keys the file leaves implicit.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parsed: RunConfig = serde_json::from_str(&text)?;
        let mut value = serde_json::to_value(&parsed)?;
        let env: Vec<(String, String)> = std::env::vars().collect();
        apply_env_overrides(&mut value, "RADIANT_", env.into_iter())?;
        let config: RunConfig = serde_json::from_value(value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != 1 {
            return Err(ConfigError::SchemaVersion(self.schema_version));
        }
        match &self.mesh {
            MeshConfig::Box { l, h, n } => {
                if !(*l > 0.0) || !(*h > 0.0) || *n == 0 {
                    return bad(format!("mesh.box needs l>0, h>0, n>=1 (got {l}, {h}, {n})"));
                }
            }
            MeshConfig::Slab { l, h, nx, nt } => {
                if !(*l > 0.0) || !(*h > 0.0) || *nx == 0 || *nt == 0 {
                    return bad("mesh.slab needs l>0, h>0, nx>=1, nt>=1".into());
                }
            }
            MeshConfig::File { path } => {
                if !path.exists() {
                    return bad(format!("mesh file {} does not exist", path.display()));
                }
            }
        }
        if self.absorption.terms.is_empty() {
            return bad("absorption.terms must not be empty".into());
        }
        for term in &self.absorption.terms {
            match &term.spectrum {
                SpectrumConfig::Grey { kappa } => {
                    if !(*kappa >= 0.0) {
                        return bad(format!("grey kappa must be >= 0, got {kappa}"));
                    }
                }
                SpectrumConfig::Csv {
                    path,
                    quantize_levels,
                    band_edits,
                } => {
                    if !path.exists() {
                        return bad(format!("spectrum file {} does not exist", path.display()));
                    }
                    if *quantize_levels == 0 {
                        return bad("quantize_levels must be >= 1".into());
                    }
                    for edit in band_edits {
                        if !(edit.lambda_min_um > 0.0) || edit.lambda_max_um < edit.lambda_min_um {
                            return bad("band edit needs 0 < lambda_min <= lambda_max".into());
                        }
                    }
                }
            }
        }
        if let Some(cloud) = &self.absorption.cloud {
            if !(cloud.multiplier > 0.0) || !(cloud.radius > 0.0) {
                return bad("cloud needs positive radius and multiplier".into());
            }
        }
        if !(0.0..1.0).contains(&self.absorption.albedo) {
            return bad(format!("albedo must be in [0,1), got {}", self.absorption.albedo));
        }
        if !(self.source.q0 >= 0.0) || !(self.source.t_sun > 0.0) {
            return bad("source needs q0 >= 0 and t_sun > 0".into());
        }
        if let Some(snow) = &self.source.snow {
            if !(snow.beta > 0.0 && snow.beta < 1.0) {
                return bad(format!("snow beta must be in (0,1), got {}", snow.beta));
            }
        }
        for variant in &self.source.variants {
            if let Some(snow) = &variant.snow {
                if !(snow.beta > 0.0 && snow.beta < 1.0) {
                    return bad(format!(
                        "variant {} snow beta must be in (0,1)",
                        variant.name
                    ));
                }
            }
        }
        let norm = self
            .source
            .sun_direction
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0) {
            return bad("sun_direction must be nonzero".into());
        }
        if !(self.hmat.epsilon > 0.0) || !(self.hmat.eta > 0.0) || self.hmat.leaf_max == 0 {
            return bad("hmat needs epsilon>0, eta>0, leaf_max>=1".into());
        }
        if !(self.solver.tol > 0.0) {
            return bad("solver.tol must be positive".into());
        }
        if !(0.0..=self.solver.t_max).contains(&self.solver.t_init) {
            return bad(format!(
                "solver.t_init must lie in [0, t_max], got {}",
                self.solver.t_init
            ));
        }
        match &self.frequency_grid {
            FrequencyGridConfig::Default => {}
            FrequencyGridConfig::Uniform { nu_max, nodes } => {
                if !(*nu_max > 0.0) || *nodes < 2 {
                    return bad("uniform grid needs nu_max>0 and nodes>=2".into());
                }
            }
            FrequencyGridConfig::Geometric { lo, hi, nodes } => {
                if !(*lo > 0.0) || !(hi > lo) || *nodes < 2 {
                    return bad("geometric grid needs 0<lo<hi and nodes>=2".into());
                }
            }
        }
        if self.grid_resolution.iter().any(|&r| r < 2) {
            return bad(format!(
                "grid_resolution needs >=2 cells per axis, got {:?}",
                self.grid_resolution
            ));
        }
        if self.ground_labels.is_empty() {
            return bad("ground_labels must not be empty".into());
        }
        Ok(())
    }
}

/// Apply environment overrides onto the raw JSON value. Key paths are
/// matched against object fields case-insensitively, preferring the longest
/// field name, so `RADIANT_SOLVER_T_INIT` resolves to `solver.t_init`.
pub fn apply_env_overrides(
    value: &mut serde_json::Value,
    prefix: &str,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<(), ConfigError> {
    for (key, raw) in vars {
        let Some(path) = key.strip_prefix(prefix) else {
            continue;
        };
        if path.is_empty() {
            continue;
        }
        let keys = match resolve_key_path(value, path) {
            Some(k) => k,
            None => return Err(ConfigError::UnknownOverride { var: key }),
        };
        let mut target = &mut *value;
        for k in &keys {
            target = target.get_mut(k).ok_or_else(|| ConfigError::BadOverride {
                var: key.clone(),
                message: format!("key {k} vanished during resolution"),
            })?;
        }
        let parsed: serde_json::Value = match serde_json::from_str(&raw) {
            Ok(v) => v,
            Err(_) => serde_json::Value::String(raw.clone()),
        };
        *target = parsed;
    }
    Ok(())
}

/// Resolve an upper-cased underscore path against the JSON tree, preferring
/// the longest matching field at each level so `T_INIT` is not split.
fn resolve_key_path(value: &serde_json::Value, path: &str) -> Option<Vec<String>> {
    if path.is_empty() {
        return Some(Vec::new());
    }
    let obj = value.as_object()?;
    let mut fields: Vec<&String> = obj.keys().collect();
    fields.sort_by_key(|f| std::cmp::Reverse(f.len()));
    for field in fields {
        let upper = field.to_uppercase();
        if let Some(rest) = path.strip_prefix(&upper) {
            if rest.is_empty() {
                return Some(vec![field.clone()]);
            }
            // a full segment must end at an underscore boundary
            let Some(tail) = rest.strip_prefix('_') else {
                continue;
            };
            if let Some(mut sub) = resolve_key_path(&obj[field], tail) {
                let mut keys = vec![field.clone()];
                keys.append(&mut sub);
                return Some(keys);
            }
        }
    }
    None
}
