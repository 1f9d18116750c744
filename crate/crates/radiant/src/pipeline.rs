//! Config-driven orchestration: build the operator pipeline, solve, and
//! write fields, profiles, and reports. Also hosts the benchmark series
//! and the profile comparison used for validation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Rotation3, Unit, Vector3};
use thiserror::Error;

use crate::absorption::{
    AbsorptionError, AbsorptionField, AbsorptionTerm, BackgroundGrid, CloudRegion, SpatialProfile,
};
use crate::config::{
    FrequencyGridConfig, MeshConfig, ProfileConfig, RunConfig, SourceVariantConfig, SpectrumConfig,
};
use crate::hmat::HmatParams;
use crate::kernels::{KernelAssembly, KernelError};
use crate::mesh::{box_mesh, load_mesh, slab_mesh, Mesh, MeshError};
use crate::report::{
    BinSummary, MeshSummary, OperatorSummary, RunReport, SolveSummary, Timings,
};
use crate::rtsolve::{
    build_rt_system, combined_bins, RtSystem, SnowSpec, SolveError, SolveOutcome, SolverConfig,
    SourceSpec,
};
use crate::spectral::{
    load_spectrum, reduced_to_celsius, FrequencyGrid, SpectralTable, SpectrumError,
};
use crate::vtk::write_vtk;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Spectral(#[from] SpectrumError),
    #[error(transparent)]
    Absorption(#[from] AbsorptionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Hmat(#[from] crate::hmat::HmatError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("profile comparison: {0}")]
    Compare(String),
}

impl PipelineError {
    /// Distinct exit code per pipeline stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Mesh(_) => 3,
            PipelineError::Spectral(_) | PipelineError::Absorption(_) => 4,
            PipelineError::Kernel(_) | PipelineError::Hmat(_) => 5,
            PipelineError::Solve(_) => 6,
            PipelineError::Io { .. } => 7,
            PipelineError::Compare(_) => 8,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn build_mesh(config: &MeshConfig) -> Result<Mesh, MeshError> {
    match config {
        MeshConfig::Box { l, h, n } => box_mesh(*l, *h, *n),
        MeshConfig::Slab { l, h, nx, nt } => slab_mesh(*l, *h, *nx, *nt),
        MeshConfig::File { path } => load_mesh(path),
    }
}

pub fn build_frequency_grid(config: &FrequencyGridConfig) -> Result<FrequencyGrid, SpectrumError> {
    match config {
        FrequencyGridConfig::Default => Ok(FrequencyGrid::default_grid()),
        FrequencyGridConfig::Uniform { nu_max, nodes } => {
            Ok(FrequencyGrid::uniform(*nu_max, *nodes))
        }
        FrequencyGridConfig::Geometric { lo, hi, nodes } => {
            FrequencyGrid::geometric(*lo, *hi, *nodes)
        }
    }
}

pub fn build_absorption_field(
    config: &RunConfig,
    grid: &FrequencyGrid,
) -> Result<AbsorptionField, PipelineError> {
    let mut terms = Vec::new();
    for term in &config.absorption.terms {
        let profile = match &term.profile {
            ProfileConfig::Constant { value } => SpatialProfile::Constant(*value),
            ProfileConfig::AffineX { base, slope } => SpatialProfile::AffineX {
                base: *base,
                slope: *slope,
            },
        };
        let mut table = match &term.spectrum {
            SpectrumConfig::Grey { kappa } => SpectralTable::grey(*kappa, grid),
            SpectrumConfig::Csv {
                path,
                quantize_levels,
                band_edits,
            } => {
                let mut table = load_spectrum(path, grid)?;
                for edit in band_edits {
                    let (edited, _) =
                        table.band_edit(grid, edit.lambda_min_um, edit.lambda_max_um, edit.value);
                    table = edited;
                }
                table.quantize(*quantize_levels)
            }
        };
        if config.absorption.albedo > 0.0 {
            table
                .set_albedo_constant(config.absorption.albedo)
                .map_err(PipelineError::Spectral)?;
        }
        terms.push(AbsorptionTerm { profile, table });
    }
    let cloud = config.absorption.cloud.as_ref().map(|c| CloudRegion {
        center_y: c.center_y,
        center_z: c.center_z,
        radius: c.radius,
        altitude_min: c.altitude_min,
        altitude_max: c.altitude_max,
        multiplier: c.multiplier,
    });
    Ok(AbsorptionField { terms, cloud })
}

fn rotation_from_angles(xy_deg: f64, xz_deg: f64) -> Rotation3<f64> {
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), xy_deg.to_radians());
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), xz_deg.to_radians());
    ry * rz
}

pub fn build_source(config: &RunConfig) -> SourceSpec {
    let dir = Vector3::new(
        config.source.sun_direction[0],
        config.source.sun_direction[1],
        config.source.sun_direction[2],
    );
    SourceSpec {
        q0: config.source.q0,
        t_sun: config.source.t_sun,
        sun_direction: Unit::new_normalize(dir).into_inner(),
        snow: config.source.snow.as_ref().map(|s| SnowSpec {
            beta: s.beta,
            h_snow: s.h_snow,
        }),
        normal_rotation: config
            .source
            .sun_angles
            .as_ref()
            .map(|a| rotation_from_angles(a.xy_deg, a.xz_deg)),
    }
}

fn variant_source(base: &SourceSpec, variant: &SourceVariantConfig) -> SourceSpec {
    SourceSpec {
        q0: variant.q0.unwrap_or(base.q0),
        snow: variant
            .snow
            .as_ref()
            .map(|s| SnowSpec {
                beta: s.beta,
                h_snow: s.h_snow,
            })
            .or(base.snow),
        normal_rotation: variant
            .sun_angles
            .as_ref()
            .map(|a| rotation_from_angles(a.xy_deg, a.xz_deg))
            .or(base.normal_rotation),
        ..base.clone()
    }
}

fn solver_config(config: &RunConfig) -> SolverConfig {
    SolverConfig {
        t_init: config.solver.t_init,
        tol: config.solver.tol,
        max_iters: config.solver.max_iters,
        t_max: config.solver.t_max,
        bracketing: config.solver.bracketing,
        bracket_low: config.solver.bracket_low,
        bracket_high: config.solver.bracket_high,
    }
}

fn hmat_params(config: &RunConfig) -> HmatParams {
    HmatParams {
        eta: config.hmat.eta,
        epsilon: config.hmat.epsilon,
        leaf_max: config.hmat.leaf_max,
    }
}

/// Everything a finished run hands back to the caller.
pub struct RunArtifacts {
    pub report: RunReport,
    pub temperature: Vec<f64>,
    pub mesh: Mesh,
}

fn solve_summary(name: &str, outcome: &SolveOutcome) -> SolveSummary {
    let s = &outcome.lower;
    SolveSummary {
        name: name.to_string(),
        iterations: s.iterations,
        converged: s.converged,
        residuals: s.residuals.clone(),
        monotone_nondecreasing: s.nondecreasing(),
        monotone_nonincreasing: s.nonincreasing(),
        sweeps: s.sweeps.clone(),
        bracket_gap: outcome.bracket_gap,
        upper_iterations: outcome.upper.as_ref().map(|u| u.iterations),
        min_temperature: s.temperature.iter().copied().fold(f64::INFINITY, f64::min),
        max_temperature: s
            .temperature
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Execute a full run: build, solve (plus source variants), write outputs.
pub fn run(config: &RunConfig, output_dir: &Path) -> Result<RunArtifacts, PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let t_total = Instant::now();
    let mut timings = Timings::default();

    let t0 = Instant::now();
    let mesh = build_mesh(&config.mesh)?;
    timings.mesh_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let freq = build_frequency_grid(&config.frequency_grid)?;
    let field = build_absorption_field(config, &freq)?;
    let bins = combined_bins(&field, &freq)?;
    timings.spectral_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let bg = BackgroundGrid::build(&mesh, &field, config.grid_resolution)?;
    timings.background_grid_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let assembly = KernelAssembly::new(&mesh, &bg, config.hmat.quadrature, &config.ground_labels)?;
    let system = build_rt_system(&assembly, &bg, bins, hmat_params(config))?;
    timings.hmat_build_s = t0.elapsed().as_secs_f64();

    let base_source = build_source(config);
    let solver_cfg = solver_config(config);

    let t0 = Instant::now();
    let outcome = system.solve(&base_source, &solver_cfg)?;
    let mut solves = vec![solve_summary("base", &outcome)];
    let mut variant_fields: Vec<(String, Vec<f64>)> = Vec::new();
    for variant in &config.source.variants {
        let vsource = variant_source(&base_source, variant);
        let voutcome = system.solve(&vsource, &solver_cfg)?;
        solves.push(solve_summary(&variant.name, &voutcome));
        variant_fields.push((variant.name.clone(), voutcome.lower.temperature.clone()));
    }
    timings.solve_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let temperature = outcome.lower.temperature.clone();
    if let Some(vtk_path) = &config.output.vtk {
        let path = output_dir.join(vtk_path);
        let celsius: Vec<f64> = temperature.iter().map(|&t| reduced_to_celsius(t)).collect();
        let mut fields: Vec<(&str, &[f64])> = vec![
            ("temperature_reduced", &temperature),
            ("temperature_celsius", &celsius),
        ];
        let jbar_named: Vec<(String, Vec<f64>)> = if config.output.jbar_vtk {
            outcome
                .lower
                .jbar
                .iter()
                .enumerate()
                .map(|(k, j)| (format!("jbar_{k}"), j.clone()))
                .collect()
        } else {
            Vec::new()
        };
        for (name, data) in &jbar_named {
            fields.push((name.as_str(), data));
        }
        for (name, data) in &variant_fields {
            fields.push((name.as_str(), data));
        }
        write_vtk(&path, &mesh, &fields).map_err(io_err(&path))?;
    }
    if let Some(profile) = &config.output.profile {
        let path = output_dir.join(&profile.path);
        write_profile(&path, &mesh, &temperature, profile.y, profile.z)?;
    }
    timings.io_s = t0.elapsed().as_secs_f64();
    timings.total_s = t_total.elapsed().as_secs_f64();

    let operators = operator_summaries(&system);
    let report = RunReport {
        schema_version: 1,
        seed: config.seed,
        mesh: MeshSummary {
            vertices: mesh.vertex_count(),
            tetrahedra: mesh.tet_count(),
            ground_vertices: system.ground_vertices.len(),
            total_volume: mesh.total_volume(),
        },
        bins: system
            .bins
            .iter()
            .map(|b| BinSummary {
                levels: b.levels.clone(),
                albedo: b.albedo,
                measure: b.measure,
                nodes: b.nodes.len(),
            })
            .collect(),
        matrices_built: system.matrices_built,
        operators,
        timings,
        solves,
    };
    if let Some(report_path) = &config.output.report {
        let path = output_dir.join(report_path);
        report.write(&path).map_err(io_err(&path))?;
    }
    Ok(RunArtifacts {
        report,
        temperature,
        mesh,
    })
}

fn operator_summaries(system: &RtSystem<'_>) -> Vec<OperatorSummary> {
    let mut out = Vec::new();
    for (k, h) in system.volume.iter().enumerate() {
        out.push(OperatorSummary {
            kind: "volume",
            bin: k,
            stats: h.stats(),
        });
    }
    for (k, h) in system.surface.iter().enumerate() {
        out.push(OperatorSummary {
            kind: "surface",
            bin: k,
            stats: h.stats(),
        });
    }
    out
}

/// Write the altitude profile T(x, y0, z0) as CSV: the vertex column whose
/// (y, z) is closest to the requested location, sorted by altitude.
pub fn write_profile(
    path: &Path,
    mesh: &Mesh,
    temperature: &[f64],
    y0: f64,
    z0: f64,
) -> Result<(), PipelineError> {
    let mut best = f64::INFINITY;
    for p in mesh.vertices() {
        let d = (p.y - y0).powi(2) + (p.z - z0).powi(2);
        if d < best {
            best = d;
        }
    }
    let mut column: Vec<(f64, f64)> = mesh
        .vertices()
        .iter()
        .zip(temperature)
        .filter(|(p, _)| (p.y - y0).powi(2) + (p.z - z0).powi(2) <= best + 1e-18)
        .map(|(p, &t)| (p.x, t))
        .collect();
    column.sort_by(|a, b| a.0.total_cmp(&b.0));
    column.dedup_by(|a, b| a.0 == b.0);

    let mut text = String::from("x,T,T_celsius\n");
    for (x, t) in column {
        text.push_str(&format!("{},{},{}\n", x, t, reduced_to_celsius(t)));
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Write the stratified reference profile as CSV (x, T, T_celsius, J).
pub fn write_slab_profile(
    path: &Path,
    solution: &crate::stratified::SlabSolution,
) -> Result<(), PipelineError> {
    let mut text = String::from("x,T,T_celsius,J\n");
    for i in 0..solution.x.len() {
        text.push_str(&format!(
            "{},{},{},{}\n",
            solution.x[i],
            solution.temperature[i],
            reduced_to_celsius(solution.temperature[i]),
            solution.mean_intensity[i]
        ));
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// A parsed profile: (x, T) samples sorted by x.
pub struct Profile {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

/// Read a profile CSV with named columns `x` and `T`.
pub fn read_profile(path: &Path) -> Result<Profile, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| PipelineError::Compare(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let xi = cols
        .iter()
        .position(|&c| c == "x")
        .ok_or_else(|| PipelineError::Compare(format!("{}: no x column", path.display())))?;
    let ti = cols
        .iter()
        .position(|&c| c == "T")
        .ok_or_else(|| PipelineError::Compare(format!("{}: no T column", path.display())))?;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |idx: usize| -> Result<f64, PipelineError> {
            fields
                .get(idx)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    PipelineError::Compare(format!(
                        "{} line {}: bad numeric field",
                        path.display(),
                        lineno + 2
                    ))
                })
        };
        rows.push((parse(xi)?, parse(ti)?));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Profile {
        x: rows.iter().map(|r| r.0).collect(),
        t: rows.iter().map(|r| r.1).collect(),
    })
}

impl Profile {
    /// Linear interpolation; clamped at the ends.
    pub fn interpolate(&self, x: f64) -> f64 {
        if x <= self.x[0] {
            return self.t[0];
        }
        if x >= *self.x.last().unwrap() {
            return *self.t.last().unwrap();
        }
        let idx = self.x.partition_point(|&v| v < x);
        let (x0, x1) = (self.x[idx - 1], self.x[idx]);
        let (t0, t1) = (self.t[idx - 1], self.t[idx]);
        t0 + (t1 - t0) * (x - x0) / (x1 - x0)
    }
}

/// Gap metrics between a profile and a reference profile evaluated on the
/// overlap of their altitude ranges (at the sample locations of `a`).
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareResult {
    pub max_rel_gap: f64,
    pub l2_rel_gap: f64,
    pub samples: usize,
}

pub fn compare_profiles(a: &Profile, reference: &Profile) -> Result<CompareResult, PipelineError> {
    let lo = a.x[0].max(reference.x[0]);
    let hi = a.x.last().unwrap().min(*reference.x.last().unwrap());
    if !(hi > lo) {
        return Err(PipelineError::Compare(
            "profiles have disjoint altitude ranges".into(),
        ));
    }
    let mut num2 = 0.0;
    let mut den2 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut samples = 0;
    for (&x, &t) in a.x.iter().zip(&a.t) {
        if x < lo - 1e-12 || x > hi + 1e-12 {
            continue;
        }
        let r = reference.interpolate(x);
        num2 += (t - r) * (t - r);
        den2 += r * r;
        scale = scale.max(r.abs());
        max_rel = max_rel.max((t - r).abs());
        samples += 1;
    }
    if samples == 0 || den2 == 0.0 {
        return Err(PipelineError::Compare("no overlapping samples".into()));
    }
    Ok(CompareResult {
        max_rel_gap: max_rel / scale.max(1e-300),
        l2_rel_gap: (num2 / den2).sqrt(),
        samples,
    })
}

/// Least-squares slope of −log(error) against log(n) for a refinement
/// series; the expected discretization order.
pub fn convergence_order(series: &[(f64, f64)]) -> f64 {
    let n = series.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(nval, err) in series {
        let x = nval.ln();
        let y = -err.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// One benchmark measurement.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchPoint {
    pub n_vertices: usize,
    pub build_s: f64,
    pub solve_s: f64,
    pub total_s: f64,
    pub stored_entries: u64,
    pub iterations: usize,
}

/// Fit quality of t = C·f(N) through the origin: the fitted constant and
/// the relative residual.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScalingFit {
    pub constant: f64,
    pub rel_residual: f64,
}

pub fn fit_through_origin(points: &[(f64, f64)]) -> ScalingFit {
    let num: f64 = points.iter().map(|&(f, t)| f * t).sum();
    let den: f64 = points.iter().map(|&(f, _)| f * f).sum();
    let c = num / den.max(1e-300);
    let mut res2 = 0.0;
    let mut tot2 = 0.0;
    for &(f, t) in points {
        res2 += (t - c * f) * (t - c * f);
        tot2 += t * t;
    }
    ScalingFit {
        constant: c,
        rel_residual: (res2 / tot2.max(1e-300)).sqrt(),
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    pub nlogn_fit: ScalingFit,
    pub nsquared_fit: ScalingFit,
    /// Historical laptop reference times for a comparable grey series
    /// (4053/30855/231796 vertices → 3/19/170 s); logged, not asserted.
    pub reference_times_s: Vec<f64>,
}

/// Run the grey benchmark series on slab meshes with the given per-axis
/// subdivision counts; reuses the base config for everything else.
pub fn bench(config: &RunConfig, series: &[usize], output_dir: &Path) -> Result<BenchReport, PipelineError> {
    std::fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let mut points = Vec::new();
    for &n in series {
        let mut cfg = config.clone();
        let (l, h) = match cfg.mesh {
            MeshConfig::Box { l, h, .. } => (l, h),
            MeshConfig::Slab { l, h, .. } => (l, h),
            MeshConfig::File { .. } => (10.0, 1.0),
        };
        cfg.mesh = MeshConfig::Slab { l, h, nx: n, nt: n };
        cfg.output = Default::default();
        cfg.output.report = None;

        let t0 = Instant::now();
        let mesh = build_mesh(&cfg.mesh)?;
        let freq = build_frequency_grid(&cfg.frequency_grid)?;
        let field = build_absorption_field(&cfg, &freq)?;
        let bins = combined_bins(&field, &freq)?;
        let bg = BackgroundGrid::build(&mesh, &field, cfg.grid_resolution)?;
        let assembly = KernelAssembly::new(&mesh, &bg, cfg.hmat.quadrature, &cfg.ground_labels)?;
        let system = build_rt_system(&assembly, &bg, bins, hmat_params(&cfg))?;
        let build_s = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let outcome = system.solve(&build_source(&cfg), &solver_config(&cfg))?;
        let solve_s = t0.elapsed().as_secs_f64();

        let stored: u64 = system
            .volume
            .iter()
            .chain(system.surface.iter())
            .map(|h| h.stats().stored_entries)
            .sum();
        points.push(BenchPoint {
            n_vertices: mesh.vertex_count(),
            build_s,
            solve_s,
            total_s: build_s + solve_s,
            stored_entries: stored,
            iterations: outcome.lower.iterations,
        });
    }

    let nlogn: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let n = p.n_vertices as f64;
            (n * n.ln(), p.total_s)
        })
        .collect();
    let nsq: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let n = p.n_vertices as f64;
            (n * n, p.total_s)
        })
        .collect();
    let report = BenchReport {
        points,
        nlogn_fit: fit_through_origin(&nlogn),
        nsquared_fit: fit_through_origin(&nsq),
        reference_times_s: vec![3.0, 19.0, 170.0],
    };

    let csv_path = output_dir.join("bench.csv");
    let mut text = String::from("n_vertices,build_s,solve_s,total_s,stored_entries,iterations\n");
    for p in &report.points {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.n_vertices, p.build_s, p.solve_s, p.total_s, p.stored_entries, p.iterations
        ));
    }
    std::fs::write(&csv_path, text).map_err(io_err(&csv_path))?;
    let json_path = output_dir.join("bench.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&report).expect("bench report serializes"),
    )
    .map_err(io_err(&json_path))?;
    Ok(report)
}

/// Dump the block layout of one operator as CSV for plotting.
pub fn inspect_hmat(
    config: &RunConfig,
    kind: &str,
    bin: usize,
    out: &Path,
) -> Result<(), PipelineError> {
    let mesh = build_mesh(&config.mesh)?;
    let freq = build_frequency_grid(&config.frequency_grid)?;
    let field = build_absorption_field(config, &freq)?;
    let bins = combined_bins(&field, &freq)?;
    let bg = BackgroundGrid::build(&mesh, &field, config.grid_resolution)?;
    let assembly = KernelAssembly::new(&mesh, &bg, config.hmat.quadrature, &config.ground_labels)?;
    let system = build_rt_system(&assembly, &bg, bins, hmat_params(config))?;
    let matrices = match kind {
        "surface" => &system.surface,
        _ => &system.volume,
    };
    let h = matrices.get(bin).ok_or_else(|| {
        PipelineError::Compare(format!("bin {bin} out of range ({} bins)", system.bins.len()))
    })?;
    let mut text = String::from("row_start,row_end,col_start,col_end,rank\n");
    for b in h.block_layout() {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            b.row_start,
            b.row_end,
            b.col_start,
            b.col_end,
            b.rank.map_or(-1i64, |r| r as i64)
        ));
    }
    std::fs::write(out, text).map_err(io_err(out))?;
    Ok(())
}

/// Convenience constructor of the grey slab validation config used by the
/// acceptance runs and the CLI samples.
pub fn grey_slab_config(nx: usize, nt: usize, l: f64) -> RunConfig {
    let json = serde_json::json!({
        "schema_version": 1,
        "mesh": {"type": "slab", "l": l, "h": 1.0, "nx": nx, "nt": nt},
        "absorption": {
            "terms": [{
                "profile": {"type": "constant", "value": 1.0},
                "spectrum": {"type": "grey", "kappa": 0.5}
            }]
        },
        "source": {"q0": 2e-5, "t_sun": 1.02},
        "grid_resolution": [16, 16, 16],
        "output": {"report": null}
    });
    let mut cfg: RunConfig = serde_json::from_value(json).expect("template config");
    cfg.output.report = None;
    cfg
}

/// Output paths produced by a run, for CLI messaging.
pub fn describe_outputs(config: &RunConfig, output_dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if let Some(v) = &config.output.vtk {
        out.push(output_dir.join(v));
    }
    if let Some(p) = &config.output.profile {
        out.push(output_dir.join(&p.path));
    }
    if let Some(r) = &config.output.report {
        out.push(output_dir.join(r));
    }
    out
}
