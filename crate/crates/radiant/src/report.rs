//! Structured run report emitted as JSON next to the field outputs.

use serde::Serialize;

use crate::hmat::CompressionStats;
use crate::rtsolve::SweepFlags;

#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub tetrahedra: usize,
    pub ground_vertices: usize,
    pub total_volume: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BinSummary {
    pub levels: Vec<f64>,
    pub albedo: f64,
    pub measure: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorSummary {
    pub kind: &'static str,
    pub bin: usize,
    #[serde(flatten)]
    pub stats: CompressionStats,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub mesh_s: f64,
    pub background_grid_s: f64,
    pub spectral_s: f64,
    pub hmat_build_s: f64,
    pub solve_s: f64,
    pub io_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub name: String,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    pub monotone_nondecreasing: bool,
    pub monotone_nonincreasing: bool,
    pub sweeps: Vec<SweepFlags>,
    pub bracket_gap: Option<f64>,
    pub upper_iterations: Option<usize>,
    pub min_temperature: f64,
    pub max_temperature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub mesh: MeshSummary,
    pub bins: Vec<BinSummary>,
    /// Compressed operators built in this run (2 per frequency bin);
    /// source-only variants reuse them all.
    pub matrices_built: usize,
    pub operators: Vec<OperatorSummary>,
    pub timings: Timings,
    pub solves: Vec<SolveSummary>,
}

impl RunReport {
    pub fn write(&self, path: &std::path::Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text)
    }
}
