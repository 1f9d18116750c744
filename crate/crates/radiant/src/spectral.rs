//! Reduced-unit spectral model: Planck emission, the frequency quadrature
//! grid, measured absorption tables with quantized levels, and the
//! frequency-bin bookkeeping that drives the per-level operator reuse.
//!
//! Units: frequencies are ν/ν₀ with ν₀ = 10¹⁴ s⁻¹, temperatures are T/T₀
//! with T₀ = 4789 K, and the Planck function takes the reduced form
//! B_ν(T) = ν³/(e^{ν/T} − 1).

use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

/// Stefan constant in reduced units, π⁴/15.
pub const SIGMA: f64 = {
    let p = std::f64::consts::PI;
    p * p * p * p / 15.0
};

/// Reduced-unit scaling constants.
#[derive(Debug, Clone, Copy)]
pub struct PlanckConstants {
    /// Intensity scale B₀ = 2ħν₀³/c² in J·m⁻².
    pub b0_j_per_m2: f64,
    /// Temperature scale T₀ = ħν₀/k in Kelvin.
    pub t0_kelvin: f64,
    /// Coupling A/ρ̄ = 4πB₀ν₀/(c_P ρ̄ T₀) in m·s⁻¹.
    pub a_over_rho_m_per_s: f64,
    /// Stefan constant π⁴/15 in reduced units.
    pub sigma: f64,
    /// Specific heat in reduced units.
    pub c_p: f64,
}

/// The constants used throughout; `sigma` is exactly π⁴/15.
pub const PLANCK_CONSTANTS: PlanckConstants = PlanckConstants {
    b0_j_per_m2: 1.47,
    t0_kelvin: 4789.0,
    a_over_rho_m_per_s: 2.70e11,
    sigma: SIGMA,
    c_p: 1.0,
};

/// Speed of light in m/s used for wavelength conversions.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 2.99e8;

/// Frequency scale ν₀ in s⁻¹.
pub const NU0_PER_S: f64 = 1e14;

/// Convert a reduced temperature to degrees Celsius.
pub fn reduced_to_celsius(t: f64) -> f64 {
    t * PLANCK_CONSTANTS.t0_kelvin - 273.15
}

/// Convert a wavelength in micrometers to a reduced frequency.
pub fn wavelength_um_to_reduced(lambda_um: f64) -> f64 {
    SPEED_OF_LIGHT_M_PER_S / (lambda_um * 1e-6) / NU0_PER_S
}

/// Reduced Planck function B_ν(T) = ν³/(e^{ν/T} − 1).
///
/// Non-positive temperatures return 0 (the T₊ convention of the temperature
/// update). Large ν/T falls back to ν³e^{−ν/T}, so the value underflows
/// gracefully instead of overflowing.
pub fn planck(nu: f64, t: f64) -> f64 {
    if t <= 0.0 || nu <= 0.0 {
        return 0.0;
    }
    let x = nu / t;
    let nu3 = nu * nu * nu;
    if x > 30.0 {
        nu3 * (-x).exp()
    } else {
        nu3 / x.exp_m1()
    }
}

/// Temperature derivative of the reduced Planck function,
/// dB/dT = ν⁴ e^{ν/T} / (T² (e^{ν/T} − 1)²).
pub fn planck_derivative(nu: f64, t: f64) -> f64 {
    if t <= 0.0 || nu <= 0.0 {
        return 0.0;
    }
    let x = nu / t;
    let nu4 = nu * nu * nu * nu;
    if x > 30.0 {
        nu4 * (-x).exp() / (t * t)
    } else {
        let em = x.exp_m1();
        nu4 * (em + 1.0) / (t * t * em * em)
    }
}

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("frequency grid must be strictly increasing and positive (node {index})")]
    GridNotIncreasing { index: usize },
    #[error("frequency grid needs at least 2 nodes")]
    GridTooSmall,
    #[error("spectrum file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("spectrum file {path}, line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("spectrum file {path} holds no data rows")]
    Empty { path: String },
    #[error("table length {table} does not match grid length {grid}")]
    LengthMismatch { table: usize, grid: usize },
    #[error("table must be quantized before bin decomposition")]
    NotQuantized,
    #[error("albedo must lie in [0, 1), got {0}")]
    BadAlbedo(f64),
}

/// Frequency quadrature grid with rectangle-rule weights Δν_k = ν_k − ν_{k−1}
/// (the first node is weighted from ν = 0).
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyGrid {
    /// Build a grid from strictly increasing positive nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, SpectrumError> {
        if nodes.len() < 2 {
            return Err(SpectrumError::GridTooSmall);
        }
        let mut prev = 0.0;
        for (i, &nu) in nodes.iter().enumerate() {
            if !(nu > prev) || !nu.is_finite() {
                return Err(SpectrumError::GridNotIncreasing { index: i });
            }
            prev = nu;
        }
        let mut weights = Vec::with_capacity(nodes.len());
        let mut last = 0.0;
        for &nu in &nodes {
            weights.push(nu - last);
            last = nu;
        }
        Ok(Self { nodes, weights })
    }

    /// Uniformly spaced nodes k·(ν_max/n), k = 1..=n.
    ///
    /// Uniform spacing makes the rectangle rule telescope: its O(h) error
    /// term cancels for functions vanishing at both ends, which is what the
    /// Stefan-Boltzmann consistency requirement needs at this node count.
    pub fn uniform(nu_max: f64, n: usize) -> Self {
        let h = nu_max / n as f64;
        let nodes = (1..=n).map(|k| k as f64 * h).collect();
        Self::from_nodes(nodes).expect("uniform grid is increasing")
    }

    /// Geometrically spaced nodes on [lo, hi]. The rectangle-rule weights
    /// carry an O(spacing-ratio) bias on geometric grids, so this spacing is
    /// unsuitable when tight Stefan-Boltzmann consistency is required.
    pub fn geometric(lo: f64, hi: f64, n: usize) -> Result<Self, SpectrumError> {
        if n < 2 || !(lo > 0.0) || !(hi > lo) {
            return Err(SpectrumError::GridTooSmall);
        }
        let q = (hi / lo).powf(1.0 / (n - 1) as f64);
        let nodes = (0..n).map(|k| lo * q.powi(k as i32)).collect();
        Self::from_nodes(nodes)
    }

    /// Default grid: 683 uniform nodes on (0, 16], covering the Wien tail of
    /// the solar temperature T_s ≈ 1.02 and the far infrared at T ≈ 0.06.
    pub fn default_grid() -> Self {
        Self::uniform(16.0, 683)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total ν-measure Σ Δν_k (= ν_max for grids anchored at 0).
    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Grid quadrature of the Planck function, Σ_k B_{ν_k}(T) Δν_k.
    pub fn integrate_planck(&self, t: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&nu, &w)| planck(nu, t) * w)
            .sum()
    }

    /// Grid quadrature of dB/dT.
    pub fn integrate_planck_derivative(&self, t: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&nu, &w)| planck_derivative(nu, t) * w)
            .sum()
    }
}

/// Per-node absorption table on a [`FrequencyGrid`], with optional quantized
/// levels and a per-node single-scattering albedo (0 by default).
#[derive(Debug, Clone)]
pub struct SpectralTable {
    raw: Vec<f64>,
    albedo: Vec<f64>,
    levels: Vec<f64>,
    level_of_node: Vec<usize>,
    quantized: bool,
}

impl SpectralTable {
    /// Table holding a single constant value; it is its own (exact) level.
    pub fn grey(kappa: f64, grid: &FrequencyGrid) -> Self {
        let n = grid.len();
        Self {
            raw: vec![kappa; n],
            albedo: vec![0.0; n],
            levels: vec![kappa],
            level_of_node: vec![0; n],
            quantized: true,
        }
    }

    /// Table from raw per-node values; levels are assigned by [`Self::quantize`].
    pub fn from_raw(raw: Vec<f64>, grid: &FrequencyGrid) -> Result<Self, SpectrumError> {
        if raw.len() != grid.len() {
            return Err(SpectrumError::LengthMismatch {
                table: raw.len(),
                grid: grid.len(),
            });
        }
        let n = raw.len();
        Ok(Self {
            raw,
            albedo: vec![0.0; n],
            levels: Vec::new(),
            level_of_node: Vec::new(),
            quantized: false,
        })
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn albedo(&self) -> &[f64] {
        &self.albedo
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    /// Distinct level values, available after quantization.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Per-node level index, available after quantization.
    pub fn level_of_node(&self) -> &[usize] {
        &self.level_of_node
    }

    /// Set a constant albedo on every node.
    pub fn set_albedo_constant(&mut self, a: f64) -> Result<(), SpectrumError> {
        if !(0.0..1.0).contains(&a) {
            return Err(SpectrumError::BadAlbedo(a));
        }
        self.albedo.iter_mut().for_each(|x| *x = a);
        Ok(())
    }

    /// Assign each node the quantized level 0.01 + round(levels·κ̃)/levels.
    ///
    /// Raw values are kept; only the level assignment is (re)built, so
    /// applying quantize twice yields the same table.
    pub fn quantize(&self, levels: usize) -> SpectralTable {
        let m = levels.max(1) as f64;
        let mut out = self.clone();
        let mut level_values: Vec<f64> = Vec::new();
        let mut level_of_node = Vec::with_capacity(self.raw.len());
        for &k in &self.raw {
            let q = 0.01 + (m * k).round() / m;
            let idx = match level_values.iter().position(|&v| v == q) {
                Some(p) => p,
                None => {
                    level_values.push(q);
                    level_values.len() - 1
                }
            };
            level_of_node.push(idx);
        }
        out.levels = level_values;
        out.level_of_node = level_of_node;
        out.quantized = true;
        out
    }

    /// Replace the raw value on grid nodes whose wavelength (µm) falls in
    /// `[lambda_min_um, lambda_max_um]`. Returns the number of nodes edited;
    /// an empty intersection is reported with a warning. Level assignments
    /// are cleared; re-quantize afterwards.
    pub fn band_edit(
        &self,
        grid: &FrequencyGrid,
        lambda_min_um: f64,
        lambda_max_um: f64,
        new_value: f64,
    ) -> (SpectralTable, usize) {
        let nu_lo = wavelength_um_to_reduced(lambda_max_um.max(lambda_min_um));
        let nu_hi = wavelength_um_to_reduced(lambda_min_um.min(lambda_max_um));
        let mut out = self.clone();
        let mut edited = 0;
        for (i, &nu) in grid.nodes().iter().enumerate() {
            if nu >= nu_lo && nu <= nu_hi {
                out.raw[i] = new_value;
                edited += 1;
            }
        }
        if edited == 0 {
            log::warn!(
                "band edit [{lambda_min_um}, {lambda_max_um}] um does not intersect the frequency grid"
            );
        }
        out.levels = Vec::new();
        out.level_of_node = Vec::new();
        out.quantized = false;
        (out, edited)
    }
}

/// Load a two-column spectrum file (wavelength in µm, κ̃) onto a grid.
///
/// Columns may be separated by whitespace or commas; `#` starts a comment.
/// Values are interpolated linearly in ν between the converted sample
/// points; outside the sampled range the nearest value is held, which
/// extends the low-frequency end by the last available sample.
pub fn load_spectrum(path: &Path, grid: &FrequencyGrid) -> Result<SpectralTable, SpectrumError> {
    let pstr = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| SpectrumError::Io {
        path: pstr.clone(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| SpectrumError::Io {
            path: pstr.clone(),
            source,
        })?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(SpectrumError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                message: format!("expected 2 columns, found {}", fields.len()),
            });
        }
        let lambda: f64 = fields[0].parse().map_err(|_| SpectrumError::Parse {
            path: pstr.clone(),
            line: lineno + 1,
            message: format!("bad wavelength {:?}", fields[0]),
        })?;
        let kappa: f64 = fields[1].parse().map_err(|_| SpectrumError::Parse {
            path: pstr.clone(),
            line: lineno + 1,
            message: format!("bad absorption value {:?}", fields[1]),
        })?;
        if !(lambda > 0.0) || !lambda.is_finite() || !kappa.is_finite() {
            return Err(SpectrumError::Parse {
                path: pstr.clone(),
                line: lineno + 1,
                message: "wavelength must be positive and finite".into(),
            });
        }
        samples.push((wavelength_um_to_reduced(lambda), kappa));
    }
    if samples.is_empty() {
        return Err(SpectrumError::Empty { path: pstr });
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let raw = grid
        .nodes()
        .iter()
        .map(|&nu| interp_hold_ends(&samples, nu))
        .collect();
    SpectralTable::from_raw(raw, grid)
}

fn interp_hold_ends(samples: &[(f64, f64)], nu: f64) -> f64 {
    let first = samples[0];
    let last = samples[samples.len() - 1];
    if nu <= first.0 {
        return first.1;
    }
    if nu >= last.0 {
        return last.1;
    }
    let idx = samples.partition_point(|s| s.0 < nu);
    let (x0, y0) = samples[idx - 1];
    let (x1, y1) = samples[idx];
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (nu - x0) / (x1 - x0)
}

/// One frequency bin: the set of grid nodes sharing a quantized level.
#[derive(Debug, Clone)]
pub struct SpectralBin {
    /// Level value κ_k shared by every node of the bin.
    pub level: f64,
    /// Bin albedo (measure-weighted mean over the bin nodes).
    pub albedo: f64,
    /// Grid node indices belonging to the bin.
    pub nodes: Vec<usize>,
    /// Σ Δν over the bin nodes.
    pub measure: f64,
}

impl SpectralBin {
    /// Band Planck integral Σ_{ν∈bin} B_ν(T) Δν.
    pub fn band_planck(&self, grid: &FrequencyGrid, t: f64) -> f64 {
        self.nodes
            .iter()
            .map(|&i| planck(grid.nodes()[i], t) * grid.weights()[i])
            .sum()
    }

    /// Band integral of dB/dT.
    pub fn band_planck_derivative(&self, grid: &FrequencyGrid, t: f64) -> f64 {
        self.nodes
            .iter()
            .map(|&i| planck_derivative(grid.nodes()[i], t) * grid.weights()[i])
            .sum()
    }
}

/// Group grid nodes by quantized level. The bins partition the grid: every
/// node lands in exactly one bin and the measures sum to the grid measure.
pub fn bin_decomposition(
    table: &SpectralTable,
    grid: &FrequencyGrid,
) -> Result<Vec<SpectralBin>, SpectrumError> {
    if !table.quantized {
        return Err(SpectrumError::NotQuantized);
    }
    let mut bins: Vec<SpectralBin> = table
        .levels
        .iter()
        .map(|&level| SpectralBin {
            level,
            albedo: 0.0,
            nodes: Vec::new(),
            measure: 0.0,
        })
        .collect();
    for (node, &lvl) in table.level_of_node.iter().enumerate() {
        let w = grid.weights()[node];
        bins[lvl].nodes.push(node);
        bins[lvl].measure += w;
        bins[lvl].albedo += table.albedo[node] * w;
    }
    bins.retain(|b| !b.nodes.is_empty());
    for b in &mut bins {
        b.albedo /= b.measure;
    }
    Ok(bins)
}
