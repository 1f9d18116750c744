//! Monotone fixed-point solver on bin-aggregated mean intensities.
//!
//! The iteration closes on J̄_k = ∫_{s_k} J_ν dν rather than on hundreds of
//! per-frequency fields. This is valid because the transport operators and
//! the albedo are constant on each bin (nodes of equal quantized absorption
//! levels), so integrating the per-frequency update over a bin commutes
//! with the operator: one compressed matrix-vector product per bin and
//! sweep replaces one per frequency node. The temperature then solves the
//! pointwise balance Σ_k κ_k(x)(1−a_k)·B̄_k(T) = Σ_k κ_k(x)(1−a_k)·J̄_k by a
//! safeguarded Newton method (the balance is strictly increasing in T).

use nalgebra::{Rotation3, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::absorption::{AbsorptionField, BackgroundGrid};
use crate::hmat::{build_cluster_tree, build_hmatrix, HMatrix, HmatParams};
use crate::kernels::{KernelAssembly, SurfaceKernel, VolumeKernel};
use crate::mesh::Mesh;
use crate::spectral::{planck, planck_derivative, FrequencyGrid, SIGMA};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("absorption tables must be quantized before binning")]
    NotQuantized,
    #[error("hmatrix build failed: {0}")]
    Hmat(#[from] crate::hmat::HmatError),
    #[error("matvec during sweep failed: {0}")]
    Sweep(crate::hmat::HmatError),
    #[error("non-finite radiative balance at vertex {vertex}")]
    NonFiniteBalance { vertex: usize },
}

/// One combined frequency bin: the set of grid nodes on which every
/// absorption term sits at a fixed quantized level, so the attenuation
/// kernel is a single function of space for the whole bin.
#[derive(Debug, Clone)]
pub struct CombinedBin {
    /// Per-term level values κ^j_k.
    pub levels: Vec<f64>,
    /// Bin albedo (measure-weighted node mean).
    pub albedo: f64,
    /// (ν, Δν) pairs of the member nodes.
    pub nodes: Vec<(f64, f64)>,
    /// Σ Δν over the bin.
    pub measure: f64,
}

impl CombinedBin {
    /// Band Planck integral Σ_{ν∈bin} B_ν(T) Δν.
    pub fn band_planck(&self, t: f64) -> f64 {
        self.nodes.iter().map(|&(nu, w)| planck(nu, t) * w).sum()
    }

    pub fn band_planck_derivative(&self, t: f64) -> f64 {
        self.nodes
            .iter()
            .map(|&(nu, w)| planck_derivative(nu, t) * w)
            .sum()
    }
}

/// Group frequency nodes by the tuple of per-term level indices. For a
/// single term this is exactly the per-level decomposition; with several
/// terms it is their common refinement, which is what the attenuation
/// kernel actually depends on.
pub fn combined_bins(
    field: &AbsorptionField,
    grid: &FrequencyGrid,
) -> Result<Vec<CombinedBin>, SolveError> {
    for term in &field.terms {
        if !term.table.is_quantized() {
            return Err(SolveError::NotQuantized);
        }
    }
    let n = grid.len();
    let mut key_of_node: Vec<Vec<usize>> = Vec::with_capacity(n);
    for node in 0..n {
        key_of_node.push(
            field
                .terms
                .iter()
                .map(|t| t.table.level_of_node()[node])
                .collect(),
        );
    }
    let mut keys: Vec<Vec<usize>> = Vec::new();
    let mut bins: Vec<CombinedBin> = Vec::new();
    for node in 0..n {
        let key = &key_of_node[node];
        let bin = match keys.iter().position(|k| k == key) {
            Some(pos) => pos,
            None => {
                keys.push(key.clone());
                bins.push(CombinedBin {
                    levels: field
                        .terms
                        .iter()
                        .zip(key)
                        .map(|(t, &l)| t.table.levels()[l])
                        .collect(),
                    albedo: 0.0,
                    nodes: Vec::new(),
                    measure: 0.0,
                });
                keys.len() - 1
            }
        };
        let w = grid.weights()[node];
        bins[bin].nodes.push((grid.nodes()[node], w));
        bins[bin].measure += w;
        // albedo is a property of the medium, shared across terms
        bins[bin].albedo += field.terms[0].table.albedo()[node] * w;
    }
    for b in &mut bins {
        b.albedo /= b.measure;
    }
    Ok(bins)
}

/// Sun and ground re-emission parameters.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    /// Re-emitted fraction of the solar constant at the ground.
    pub q0: f64,
    /// Reduced sun temperature for the emission spectrum.
    pub t_sun: f64,
    /// Unit vector pointing from the ground toward the sun.
    pub sun_direction: Vector3<f64>,
    /// Optional snow albedo step: the source factor becomes
    /// β + (1−β)·[altitude < h_snow].
    pub snow: Option<SnowSpec>,
    /// Optional rotation applied to the ground normals in the incidence
    /// cosine only (accounts for the hour of the day).
    pub normal_rotation: Option<Rotation3<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SnowSpec {
    pub beta: f64,
    pub h_snow: f64,
}

impl SourceSpec {
    pub fn vertical_sun(q0: f64, t_sun: f64) -> Self {
        Self {
            q0,
            t_sun,
            sun_direction: Vector3::new(1.0, 0.0, 0.0),
            snow: None,
            normal_rotation: None,
        }
    }
}

/// Solver tolerances and start values.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub t_init: f64,
    /// Stop when max_i |T_i^{n+1} − T_i^n| < tol.
    pub tol: f64,
    pub max_iters: usize,
    /// Temperature cap of the emission balance; inactive in sane runs.
    pub t_max: f64,
    /// Run both a lower and an upper start and report the gap.
    pub bracketing: bool,
    pub bracket_low: f64,
    pub bracket_high: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_init: 0.0,
            tol: 1e-11,
            max_iters: 200,
            t_max: 2.0,
            bracketing: false,
            bracket_low: 0.01,
            bracket_high: 0.12,
        }
    }
}

/// Everything needed to sweep: per-bin compressed operators, the source
/// geometry, and the per-vertex balance weights.
pub struct RtSystem<'a> {
    pub mesh: &'a Mesh,
    pub bins: Vec<CombinedBin>,
    pub volume: Vec<HMatrix>,
    pub surface: Vec<HMatrix>,
    /// Ground vertex ids (columns of the surface operators).
    pub ground_vertices: Vec<u32>,
    /// Inward vertex normals at the ground vertices.
    pub ground_normals: Vec<Vector3<f64>>,
    /// κ_bin(x_i) per bin per vertex, the spatial factor of the balance.
    pub kappa_weight: Vec<Vec<f64>>,
    /// Number of compressed operators built (2 per bin).
    pub matrices_built: usize,
}

/// Build per-bin volume and surface operators.
pub fn build_rt_system<'a>(
    assembly: &KernelAssembly<'a>,
    grid: &'a BackgroundGrid,
    bins: Vec<CombinedBin>,
    params: HmatParams,
) -> Result<RtSystem<'a>, SolveError> {
    let mesh = assembly.mesh;
    let volume_tree = build_cluster_tree(mesh.vertices(), params.leaf_max)?;
    let ground_points = assembly.ground.points(mesh);
    let surface_tree = build_cluster_tree(&ground_points, params.leaf_max)?;

    let mut volume = Vec::with_capacity(bins.len());
    let mut surface = Vec::with_capacity(bins.len());
    for bin in &bins {
        let vk = VolumeKernel {
            assembly,
            levels: bin.levels.clone(),
        };
        volume.push(build_hmatrix(&volume_tree, &volume_tree, &vk, params)?);
        let sk = SurfaceKernel {
            assembly,
            levels: bin.levels.clone(),
        };
        surface.push(build_hmatrix(&volume_tree, &surface_tree, &sk, params)?);
    }

    let kappa_weight = bins
        .iter()
        .map(|bin| {
            mesh.vertices()
                .iter()
                .map(|p| grid.kappa_at(&bin.levels, p))
                .collect()
        })
        .collect();

    let matrices_built = 2 * bins.len();
    Ok(RtSystem {
        mesh,
        bins,
        volume,
        surface,
        ground_vertices: assembly.ground.vertices.clone(),
        ground_normals: assembly.ground.inward_normal.clone(),
        kappa_weight,
        matrices_built,
    })
}

/// Per-sweep monotonicity record.
#[derive(Debug, Clone, Serialize)]
pub struct SweepFlags {
    pub min_delta: f64,
    pub max_delta: f64,
}

/// State of one fixed-point run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub temperature: Vec<f64>,
    /// Bin-aggregated mean intensities J̄_k per vertex.
    pub jbar: Vec<Vec<f64>>,
    /// Bin-aggregated boundary source, fixed over the run.
    pub sebar: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub sweeps: Vec<SweepFlags>,
    pub converged: bool,
}

impl SolverState {
    /// True when no sweep ever decreased any vertex temperature.
    pub fn nondecreasing(&self) -> bool {
        self.sweeps.iter().all(|s| s.min_delta >= -1e-12)
    }

    /// True when no sweep ever increased any vertex temperature.
    pub fn nonincreasing(&self) -> bool {
        self.sweeps.iter().all(|s| s.max_delta <= 1e-12)
    }
}

/// Result of `solve`, with the optional upper bracketing run.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub lower: SolverState,
    pub upper: Option<SolverState>,
    /// max_i |T_lower − T_upper| after convergence.
    pub bracket_gap: Option<f64>,
}

impl RtSystem<'_> {
    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// Band-integrated ground source vector Q̄_k over the ground vertices.
    pub fn ground_source(&self, source: &SourceSpec, bin: &CombinedBin) -> Vec<f64> {
        let band = bin.band_planck(source.t_sun);
        self.ground_vertices
            .iter()
            .zip(&self.ground_normals)
            .map(|(&v, normal)| {
                let p = self.mesh.vertex(v as usize);
                let n = match &source.normal_rotation {
                    Some(r) => r * normal,
                    None => *normal,
                };
                let cos = source.sun_direction.dot(&n).max(0.0);
                let snow_factor = match &source.snow {
                    Some(s) => s.beta + (1.0 - s.beta) * f64::from(u8::from(p.x < s.h_snow)),
                    None => 1.0,
                };
                source.q0 * snow_factor * cos * band
            })
            .collect()
    }

    /// Initial state: J̄⁰ = S̄ᴱ (one surface matvec per bin), T⁰ = t_init.
    pub fn init(&self, source: &SourceSpec, t_init: f64) -> Result<SolverState, SolveError> {
        let n = self.vertex_count();
        let mut sebar = Vec::with_capacity(self.bins.len());
        for (k, bin) in self.bins.iter().enumerate() {
            let q = self.ground_source(source, bin);
            let se = self.surface[k].matvec(&q).map_err(SolveError::Sweep)?;
            sebar.push(se);
        }
        Ok(SolverState {
            temperature: vec![t_init.max(0.0); n],
            jbar: sebar.clone(),
            sebar,
            iterations: 0,
            residuals: Vec::new(),
            sweeps: Vec::new(),
            converged: false,
        })
    }

    /// One sweep with the default temperature cap. See [`Self::iterate_capped`].
    pub fn iterate(&self, state: &mut SolverState) -> Result<f64, SolveError> {
        self.iterate_capped(state, 2.0)
    }

    fn run(
        &self,
        source: &SourceSpec,
        t_init: f64,
        config: &SolverConfig,
    ) -> Result<SolverState, SolveError> {
        let mut state = self.init(source, t_init)?;
        while state.iterations < config.max_iters {
            let residual = self.iterate_capped(&mut state, config.t_max)?;
            if residual < config.tol {
                state.converged = true;
                break;
            }
        }
        Ok(state)
    }

    /// One sweep: per bin J̄_k ← S̄ᴱ_k + G_k·(a_k J̄_k + (1−a_k) B̄_k(T)),
    /// then the pointwise Newton temperature update (double-buffered, so
    /// the sweep reads only the previous state). Returns max_i |ΔT_i|.
    pub fn iterate_capped(&self, state: &mut SolverState, t_max: f64) -> Result<f64, SolveError> {
        let n = self.vertex_count();
        let t_old = &state.temperature;

        let mut jbar_new = Vec::with_capacity(self.bins.len());
        for (k, bin) in self.bins.iter().enumerate() {
            let a = bin.albedo;
            let src: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let emission = (1.0 - a) * bin.band_planck(t_old[j]);
                    let scattering = if a > 0.0 { a * state.jbar[k][j] } else { 0.0 };
                    emission + scattering
                })
                .collect();
            let transported = self.volume[k].matvec(&src).map_err(SolveError::Sweep)?;
            let jk: Vec<f64> = state.sebar[k]
                .iter()
                .zip(&transported)
                .map(|(&se, &tr)| se + tr)
                .collect();
            jbar_new.push(jk);
        }

        let t_new: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let weights: Vec<f64> = self
                    .bins
                    .iter()
                    .enumerate()
                    .map(|(k, bin)| self.kappa_weight[k][i] * (1.0 - bin.albedo))
                    .collect();
                let rhs: f64 = weights
                    .iter()
                    .zip(&jbar_new)
                    .map(|(&w, jk)| w * jk[i])
                    .sum();
                solve_balance_temperature(&self.bins, &weights, rhs, t_max)
            })
            .collect();

        let mut residual: f64 = 0.0;
        let mut min_delta = f64::INFINITY;
        let mut max_delta = f64::NEG_INFINITY;
        for i in 0..n {
            if !t_new[i].is_finite() {
                return Err(SolveError::NonFiniteBalance { vertex: i });
            }
            let d = t_new[i] - t_old[i];
            residual = residual.max(d.abs());
            min_delta = min_delta.min(d);
            max_delta = max_delta.max(d);
        }
        state.temperature = t_new;
        state.jbar = jbar_new;
        state.iterations += 1;
        state.residuals.push(residual);
        state.sweeps.push(SweepFlags {
            min_delta,
            max_delta,
        });
        Ok(residual)
    }

    /// Fixed-point solve. With bracketing enabled, a lower and an upper
    /// start are run and the maximal pointwise gap between the two limits
    /// is reported.
    pub fn solve(
        &self,
        source: &SourceSpec,
        config: &SolverConfig,
    ) -> Result<SolveOutcome, SolveError> {
        if !config.bracketing {
            let state = self.run(source, config.t_init, config)?;
            if !state.converged {
                log::warn!(
                    "fixed point not converged after {} sweeps (residual {:.3e})",
                    state.iterations,
                    state.residuals.last().copied().unwrap_or(f64::NAN)
                );
            }
            return Ok(SolveOutcome {
                lower: state,
                upper: None,
                bracket_gap: None,
            });
        }
        let lower = self.run(source, config.bracket_low, config)?;
        let upper = self.run(source, config.bracket_high, config)?;
        let gap = lower
            .temperature
            .iter()
            .zip(&upper.temperature)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        Ok(SolveOutcome {
            lower,
            upper: Some(upper),
            bracket_gap: Some(gap),
        })
    }
}

/// Solve Σ_k w_k·B̄_k(T) = rhs for T ∈ [0, t_max] to 1e-13 relative.
///
/// The left side is strictly increasing with positive derivative, so a
/// Newton iteration from the grey-body estimate converges; steps leaving
/// the current bracket fall back to bisection.
pub fn solve_balance_temperature(
    bins: &[CombinedBin],
    weights: &[f64],
    rhs: f64,
    t_max: f64,
) -> f64 {
    if !(rhs > 0.0) {
        return 0.0;
    }
    let g = |t: f64| -> f64 {
        bins.iter()
            .zip(weights)
            .map(|(b, &w)| w * b.band_planck(t))
            .sum::<f64>()
            - rhs
    };
    let dg = |t: f64| -> f64 {
        bins.iter()
            .zip(weights)
            .map(|(b, &w)| w * b.band_planck_derivative(t))
            .sum()
    };

    if g(t_max) < 0.0 {
        return t_max;
    }

    // grey-body starting guess
    let total_measure: f64 = bins.iter().map(|b| b.measure).sum();
    let wbar: f64 = bins
        .iter()
        .zip(weights)
        .map(|(b, &w)| w * b.measure)
        .sum::<f64>()
        / total_measure.max(1e-300);
    let mut t = if wbar > 0.0 {
        (rhs / (SIGMA * wbar)).powf(0.25).clamp(1e-8, t_max)
    } else {
        0.5 * t_max
    };

    // bracket [lo, hi] with g(lo) < 0 <= g(hi)
    let mut lo = 0.0f64;
    let mut hi = t.max(1e-6);
    let mut ghi = g(hi);
    while ghi < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi >= t_max {
            hi = t_max;
            ghi = g(hi);
            break;
        }
        ghi = g(hi);
    }
    let _ = ghi;

    t = t.clamp(lo, hi);
    for _ in 0..200 {
        let gv = g(t);
        if gv > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let d = dg(t);
        let mut step = if d > 0.0 { -gv / d } else { f64::NAN };
        let mut t_next = t + step;
        if !t_next.is_finite() || t_next <= lo || t_next >= hi {
            t_next = 0.5 * (lo + hi);
            step = t_next - t;
        }
        let converged = step.abs() <= 1e-13 * t.max(1e-10);
        t = t_next;
        if converged {
            break;
        }
    }
    t.clamp(0.0, t_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorption::{AbsorptionTerm, SpatialProfile};
    use crate::kernels::{assemble_dense, nearest_vertex};
    use crate::mesh::quadrature::QuadraturePreset;
    use crate::mesh::slab_mesh;
    use crate::spectral::SpectralTable;
    use approx::assert_relative_eq;
    use nalgebra::Point3;

    fn grey_setup(
        kappa: f64,
        nx: usize,
        nt: usize,
        l: f64,
    ) -> (Mesh, AbsorptionField, FrequencyGrid) {
        let mesh = slab_mesh(l, 1.0, nx, nt).unwrap();
        let grid = FrequencyGrid::default_grid();
        let field = AbsorptionField {
            terms: vec![AbsorptionTerm {
                profile: SpatialProfile::Constant(1.0),
                table: SpectralTable::grey(kappa, &grid),
            }],
            cloud: None,
        };
        (mesh, field, grid)
    }

    fn dense_params() -> HmatParams {
        // eta so small nothing is admissible: exact dense blocks
        HmatParams {
            eta: 1e-12,
            epsilon: 1e-3,
            leaf_max: 64,
        }
    }

    #[test]
    fn combined_bins_single_term() {
        let grid = FrequencyGrid::uniform(4.0, 10);
        let raw: Vec<f64> = (0..10).map(|i| if i < 4 { 0.2 } else { 0.6 }).collect();
        let table = SpectralTable::from_raw(raw, &grid).unwrap().quantize(10);
        let field = AbsorptionField {
            terms: vec![AbsorptionTerm {
                profile: SpatialProfile::Constant(1.0),
                table,
            }],
            cloud: None,
        };
        let bins = combined_bins(&field, &grid).unwrap();
        assert_eq!(bins.len(), 2);
        let total: f64 = bins.iter().map(|b| b.measure).sum();
        assert_relative_eq!(total, grid.total_measure(), max_relative = 1e-12);
    }

    #[test]
    fn combined_bins_two_terms_refine() {
        let grid = FrequencyGrid::uniform(4.0, 8);
        let t1 = SpectralTable::from_raw(
            (0..8).map(|i| if i < 4 { 0.2 } else { 0.5 }).collect(),
            &grid,
        )
        .unwrap()
        .quantize(10);
        let t2 = SpectralTable::from_raw(
            (0..8).map(|i| if i % 4 < 2 { 0.1 } else { 0.3 }).collect(),
            &grid,
        )
        .unwrap()
        .quantize(10);
        let field = AbsorptionField {
            terms: vec![
                AbsorptionTerm {
                    profile: SpatialProfile::Constant(1.0),
                    table: t1,
                },
                AbsorptionTerm {
                    profile: SpatialProfile::AffineX {
                        base: 1.0,
                        slope: -0.5,
                    },
                    table: t2,
                },
            ],
            cloud: None,
        };
        let bins = combined_bins(&field, &grid).unwrap();
        // 2 levels x 2 levels crossed in 4 blocks of the node sequence
        assert_eq!(bins.len(), 4);
        for b in &bins {
            assert_eq!(b.levels.len(), 2);
        }
    }

    #[test]
    fn newton_matches_quartic_closed_form() {
        // grey: one bin over the whole grid; construct rhs = w·B̄(T*) and
        // recover T* through the balance solve
        let grid = FrequencyGrid::default_grid();
        let field = {
            let table = SpectralTable::grey(0.5, &grid);
            AbsorptionField {
                terms: vec![AbsorptionTerm {
                    profile: SpatialProfile::Constant(1.0),
                    table,
                }],
                cloud: None,
            }
        };
        let bins = combined_bins(&field, &grid).unwrap();
        let weights = [0.5];
        for t_star in [0.02, 0.055, 0.3, 1.02] {
            let rhs = weights[0] * bins[0].band_planck(t_star);
            let t = solve_balance_temperature(&bins, &weights, rhs, 2.0);
            assert_relative_eq!(t, t_star, max_relative = 1e-10);
        }
        // and against the Stefan-Boltzmann quartic root (grid-level accuracy)
        let rhs = 0.5 * bins[0].band_planck(0.06);
        let t = solve_balance_temperature(&bins, &weights, rhs, 2.0);
        let quartic = (rhs / (0.5 * SIGMA)).powf(0.25);
        assert_relative_eq!(t, quartic, max_relative = 2e-3);
    }

    #[test]
    fn newton_agrees_with_bisection_oracle() {
        let grid = FrequencyGrid::default_grid();
        let raw: Vec<f64> = (0..grid.len())
            .map(|i| 0.1 + 0.4 * ((i as f64 * 0.05).sin().abs()))
            .collect();
        let table = SpectralTable::from_raw(raw, &grid).unwrap().quantize(10);
        let field = AbsorptionField {
            terms: vec![AbsorptionTerm {
                profile: SpatialProfile::Constant(1.0),
                table,
            }],
            cloud: None,
        };
        let bins = combined_bins(&field, &grid).unwrap();
        let weights: Vec<f64> = bins.iter().map(|b| b.levels[0]).collect();

        let mut state = 0xfeed_beefu64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(99);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let rhs = 1e-7 * (1.0 + 1e4 * rnd());
            let t = solve_balance_temperature(&bins, &weights, rhs, 2.0);
            // independent bisection
            let g = |t: f64| -> f64 {
                bins.iter()
                    .zip(&weights)
                    .map(|(b, &w)| w * b.band_planck(t))
                    .sum::<f64>()
                    - rhs
            };
            let (mut lo, mut hi) = (0.0, 2.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t_bis = 0.5 * (lo + hi);
            assert!(
                (t - t_bis).abs() <= 1e-10 * t_bis.max(1e-8),
                "newton {t} vs bisection {t_bis}"
            );
        }
        // zero rhs maps to zero temperature
        assert_eq!(solve_balance_temperature(&bins, &weights, 0.0, 2.0), 0.0);
    }

    #[test]
    fn dark_boundary_converges_to_zero() {
        let (mesh, field, grid) = grey_setup(0.5, 2, 3, 1.0);
        let bg = BackgroundGrid::build(&mesh, &field, [8, 8, 8]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        let sys = build_rt_system(&asm, &bg, bins, dense_params()).unwrap();
        let source = SourceSpec::vertical_sun(0.0, 1.02);
        let out = sys
            .solve(&source, &SolverConfig::default())
            .unwrap();
        assert!(out.lower.converged);
        assert!(out.lower.temperature.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn first_sweep_reproduces_boundary_source() {
        // a = 0, T = 0: J̄ after one sweep equals S̄ᴱ exactly
        let (mesh, field, grid) = grey_setup(0.5, 2, 3, 1.0);
        let bg = BackgroundGrid::build(&mesh, &field, [8, 8, 8]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        let sys = build_rt_system(&asm, &bg, bins, dense_params()).unwrap();
        let source = SourceSpec::vertical_sun(2e-5, 1.02);
        let mut state = sys.init(&source, 0.0).unwrap();
        sys.iterate(&mut state).unwrap();
        for (j, se) in state.jbar[0].iter().zip(&state.sebar[0]) {
            assert_relative_eq!(j, se, max_relative = 1e-14);
        }
        // J̄ and T stay nonnegative
        assert!(state.jbar[0].iter().all(|&v| v >= 0.0));
        assert!(state.temperature.iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn bin_aggregated_iteration_equals_per_frequency_reference() {
        // 5-node grid with 2 levels, a = 0: the bin-aggregated sweep must
        // equal the per-frequency sweep aggregated afterwards (both on the
        // same exact dense operators)
        let mesh = slab_mesh(1.0, 1.0, 2, 2).unwrap();
        let grid = FrequencyGrid::from_nodes(vec![0.4, 0.8, 1.2, 1.6, 2.0]).unwrap();
        let raw = vec![0.2, 0.2, 0.7, 0.7, 0.2];
        let table = SpectralTable::from_raw(raw.clone(), &grid).unwrap().quantize(10);
        let field = AbsorptionField {
            terms: vec![AbsorptionTerm {
                profile: SpatialProfile::Constant(1.0),
                table,
            }],
            cloud: None,
        };
        let bg = BackgroundGrid::build(&mesh, &field, [8, 8, 8]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        assert_eq!(bins.len(), 2);
        let sys = build_rt_system(&asm, &bg, bins.clone(), dense_params()).unwrap();

        let source = SourceSpec::vertical_sun(2e-5, 1.02);
        let mut state = sys.init(&source, 0.0).unwrap();
        // two sweeps of the bin-aggregated iteration
        sys.iterate(&mut state).unwrap();
        sys.iterate(&mut state).unwrap();

        // per-frequency reference with dense matrices per level
        let n = mesh.vertex_count();
        let levels: Vec<f64> = bins.iter().map(|b| b.levels[0]).collect();
        let mut dense_v = Vec::new();
        let mut dense_s = Vec::new();
        for &lvl in &levels {
            dense_v.push(
                assemble_dense(
                    &VolumeKernel {
                        assembly: &asm,
                        levels: vec![lvl],
                    },
                    5000,
                )
                .unwrap(),
            );
            dense_s.push(
                assemble_dense(
                    &SurfaceKernel {
                        assembly: &asm,
                        levels: vec![lvl],
                    },
                    5000,
                )
                .unwrap(),
            );
        }
        let ng = asm.ground.vertex_count();
        let level_of_node: Vec<usize> = raw
            .iter()
            .map(|&k| {
                let q = 0.01 + (10.0 * k).round() / 10.0;
                levels.iter().position(|&l| (l - q).abs() < 1e-12).unwrap()
            })
            .collect();

        // per-ν boundary sources
        let q_at = |jl: usize, nu: f64| -> f64 {
            let v = sys.ground_vertices[jl] as usize;
            let _ = v;
            2e-5 * planck(nu, 1.02) * sys.ground_normals[jl].x.max(0.0)
        };
        let mut j_nu = vec![vec![0.0; n]; grid.len()];
        let mut se_nu = vec![vec![0.0; n]; grid.len()];
        for (nu_idx, &nu) in grid.nodes().iter().enumerate() {
            let lvl = level_of_node[nu_idx];
            let s = &dense_s[lvl];
            for i in 0..n {
                let mut acc = 0.0;
                for jl in 0..ng {
                    acc += s[i * ng + jl] * q_at(jl, nu);
                }
                se_nu[nu_idx][i] = acc;
            }
            j_nu[nu_idx] = se_nu[nu_idx].clone();
        }
        // two per-ν sweeps: J_ν ← SE_ν + G_{κν} B_ν(T); T from the balance
        let mut t_ref = vec![0.0; n];
        for _sweep in 0..2 {
            for (nu_idx, &nu) in grid.nodes().iter().enumerate() {
                let lvl = level_of_node[nu_idx];
                let gm = &dense_v[lvl];
                let src: Vec<f64> = (0..n).map(|j| planck(nu, t_ref[j])).collect();
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += gm[i * n + j] * src[j];
                    }
                    j_nu[nu_idx][i] = se_nu[nu_idx][i] + acc;
                }
            }
            // balance: Σ_ν κ_ν J_ν Δν = Σ_ν κ_ν B_ν(T) Δν
            for i in 0..n {
                let weights: Vec<f64> = levels.clone();
                let rhs: f64 = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(nu_idx, _)| {
                        weights[level_of_node[nu_idx]]
                            * j_nu[nu_idx][i]
                            * grid.weights()[nu_idx]
                    })
                    .sum();
                let wts: Vec<f64> = bins.iter().map(|b| b.levels[0]).collect();
                t_ref[i] = solve_balance_temperature(&bins, &wts, rhs, 2.0);
            }
        }

        // aggregate the per-ν fields over each bin and compare
        for (k, bin) in bins.iter().enumerate() {
            for i in 0..n {
                let mut agg = 0.0;
                for (nu_idx, &nu) in grid.nodes().iter().enumerate() {
                    if (levels[level_of_node[nu_idx]] - bin.levels[0]).abs() < 1e-12 {
                        let _ = nu;
                        agg += j_nu[nu_idx][i] * grid.weights()[nu_idx];
                    }
                }
                let rel = (state.jbar[k][i] - agg).abs() / agg.abs().max(1e-300);
                assert!(
                    rel <= 1e-12,
                    "bin {k} vertex {i}: {} vs {} (rel {rel})",
                    state.jbar[k][i],
                    agg
                );
            }
        }
        for i in 0..n {
            assert_relative_eq!(state.temperature[i], t_ref[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn lower_start_is_monotone_nondecreasing() {
        let (mesh, field, grid) = grey_setup(0.5, 3, 4, 2.0);
        let bg = BackgroundGrid::build(&mesh, &field, [8, 8, 8]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        let sys = build_rt_system(&asm, &bg, bins, dense_params()).unwrap();
        let source = SourceSpec::vertical_sun(2e-5, 1.02);
        let cfg = SolverConfig {
            t_init: 0.01,
            tol: 1e-11,
            max_iters: 60,
            ..SolverConfig::default()
        };
        let out = sys.solve(&source, &cfg).unwrap();
        assert!(out.lower.converged, "residuals: {:?}", out.lower.residuals);
        assert!(out.lower.nondecreasing());
        assert!(out.lower.temperature.iter().all(|&t| t >= 0.0));
        // residuals decrease geometrically after burn-in
        let r = &out.lower.residuals;
        assert!(r[r.len() - 1] < r[1]);
    }

    #[test]
    fn bracketing_runs_pinch_the_fixed_point() {
        let (mesh, field, grid) = grey_setup(0.5, 3, 4, 2.0);
        let bg = BackgroundGrid::build(&mesh, &field, [8, 8, 8]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        let sys = build_rt_system(&asm, &bg, bins, dense_params()).unwrap();
        let source = SourceSpec::vertical_sun(2e-5, 1.02);
        let cfg = SolverConfig {
            bracketing: true,
            tol: 1e-11,
            max_iters: 60,
            ..SolverConfig::default()
        };
        let out = sys.solve(&source, &cfg).unwrap();
        let upper = out.upper.as_ref().unwrap();
        assert!(out.lower.converged && upper.converged);
        assert!(out.lower.nondecreasing());
        assert!(upper.nonincreasing());
        assert!(out.bracket_gap.unwrap() < 1e-6, "gap {}", out.bracket_gap.unwrap());
    }

    #[test]
    fn scattering_toy_matches_dense_richardson_oracle() {
        // a = 0.5 grey toy: the system sweep must match an independent
        // dense Richardson iteration with explicit scattering
        let (mesh, mut field, grid) = grey_setup(0.5, 2, 2, 1.0);
        field.terms[0].table.set_albedo_constant(0.5).unwrap();
        let bg = BackgroundGrid::build(&mesh, &field, [8, 8, 8]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        assert_eq!(bins.len(), 1);
        assert_relative_eq!(bins[0].albedo, 0.5);
        let sys = build_rt_system(&asm, &bg, bins.clone(), dense_params()).unwrap();
        let source = SourceSpec::vertical_sun(2e-5, 1.02);
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iters: 120,
            ..SolverConfig::default()
        };
        let out = sys.solve(&source, &cfg).unwrap();
        assert!(out.lower.converged);

        // oracle
        let n = mesh.vertex_count();
        let ng = asm.ground.vertex_count();
        let gv = assemble_dense(
            &VolumeKernel {
                assembly: &asm,
                levels: bins[0].levels.clone(),
            },
            5000,
        )
        .unwrap();
        let gs = assemble_dense(
            &SurfaceKernel {
                assembly: &asm,
                levels: bins[0].levels.clone(),
            },
            5000,
        )
        .unwrap();
        let q: Vec<f64> = (0..ng)
            .map(|jl| 2e-5 * sys.ground_normals[jl].x.max(0.0) * bins[0].band_planck(1.02))
            .collect();
        let se: Vec<f64> = (0..n)
            .map(|i| (0..ng).map(|jl| gs[i * ng + jl] * q[jl]).sum())
            .collect();
        let mut jb = se.clone();
        let mut t = vec![0.0; n];
        let (a, kappa) = (0.5, 0.5);
        for _ in 0..400 {
            let src: Vec<f64> = (0..n)
                .map(|j| a * jb[j] + (1.0 - a) * bins[0].band_planck(t[j]))
                .collect();
            let mut jnew = se.clone();
            for i in 0..n {
                for j in 0..n {
                    jnew[i] += gv[i * n + j] * src[j];
                }
            }
            let mut delta: f64 = 0.0;
            for i in 0..n {
                let rhs = kappa * (1.0 - a) * jnew[i];
                let tn = solve_balance_temperature(&bins, &[kappa * (1.0 - a)], rhs, 2.0);
                delta = delta.max((tn - t[i]).abs());
                t[i] = tn;
            }
            jb = jnew;
            if delta < 1e-12 {
                break;
            }
        }
        for i in 0..n {
            assert_relative_eq!(out.lower.temperature[i], t[i], max_relative = 1e-9);
        }
    }

    #[test]
    fn sebar_profile_matches_e3_on_slab() {
        // the initialized boundary source reproduces (Q⁰σT_s⁴/2)E₃(κx)
        let (mesh, field, grid) = grey_setup(0.5, 4, 8, 4.0);
        let bg = BackgroundGrid::build(&mesh, &field, [8, 16, 16]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        let sys = build_rt_system(&asm, &bg, bins, dense_params()).unwrap();
        let source = SourceSpec::vertical_sun(2e-5, 1.02);
        let state = sys.init(&source, 0.0).unwrap();
        let amp = 2e-5 * sys.bins[0].band_planck(1.02);
        for height in [0.25, 0.5, 0.75, 1.0] {
            let i = nearest_vertex(&mesh, &Point3::new(height, 0.0, 0.0));
            let want = 0.5 * amp * crate::stratified::expint(3, 0.5 * height);
            let got = state.sebar[0][i];
            let rel = (got - want).abs() / want;
            assert!(rel < 0.05, "height {height}: {got} vs {want} (rel {rel})");
        }
    }

    #[test]
    fn snow_and_rotation_modify_source_only() {
        let (mesh, field, grid) = grey_setup(0.5, 2, 3, 1.0);
        let bg = BackgroundGrid::build(&mesh, &field, [8, 8, 8]).unwrap();
        let asm = KernelAssembly::new(&mesh, &bg, QuadraturePreset::Standard, &[1]).unwrap();
        let bins = combined_bins(&field, &grid).unwrap();
        let sys = build_rt_system(&asm, &bg, bins, dense_params()).unwrap();
        let plain = SourceSpec::vertical_sun(2e-5, 1.02);
        let snowy = SourceSpec {
            snow: Some(SnowSpec {
                beta: 0.3,
                h_snow: 0.25,
            }),
            ..plain.clone()
        };
        let q_plain = sys.ground_source(&plain, &sys.bins[0]);
        let q_snow = sys.ground_source(&snowy, &sys.bins[0]);
        // flat ground at altitude 0 < 0.25: no snow there, factor 1
        for (a, b) in q_plain.iter().zip(&q_snow) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        // rotated sun at 45°: cosine drops to √2/2
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4);
        let tilted = SourceSpec {
            normal_rotation: Some(rot),
            ..plain.clone()
        };
        let q_tilt = sys.ground_source(&tilted, &sys.bins[0]);
        for (a, b) in q_plain.iter().zip(&q_tilt) {
            assert_relative_eq!(b / a, 0.5f64.sqrt(), max_relative = 1e-12);
        }
    }
}
