//! Spatial absorption fields and the Cartesian background grid.
//!
//! The absorption coefficient is a separable sum κ_ν(x) = Σ_j ρ_j(x)·κ^j_ν.
//! The spatial factors ρ_j are cached on a background grid at build time
//! (with the optional cloud multiplier applied), together with an
//! outside-domain mask: cells whose center lies in no tetrahedron behave as
//! infinitely absorbing, so segments crossing a non-convex notch are fully
//! occluded and the attenuation returns an exact zero.

use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::mesh::{Mesh, TetLocator};
use crate::spectral::SpectralTable;

#[derive(Debug, Error)]
pub enum AbsorptionError {
    #[error("background grid needs at least 2 cells per axis, got {0:?}")]
    ResolutionTooSmall([usize; 3]),
    #[error("mesh bounding box is degenerate along axis {axis}")]
    DegenerateBox { axis: usize },
    #[error("absorption field needs at least one term")]
    NoTerms,
    #[error("cloud multiplier must be positive, got {0}")]
    BadCloudMultiplier(f64),
}

/// Spatial factor ρ_j(x). Constant and x-affine profiles keep a closed-form
/// line integral; anything else is evaluated through the grid samples.
#[derive(Clone)]
pub enum SpatialProfile {
    Constant(f64),
    /// ρ(x) = base + slope·x where x is the altitude coordinate.
    AffineX { base: f64, slope: f64 },
    Custom(Arc<dyn Fn(&Point3<f64>) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for SpatialProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpatialProfile::Constant(c) => write!(f, "Constant({c})"),
            SpatialProfile::AffineX { base, slope } => {
                write!(f, "AffineX {{ base: {base}, slope: {slope} }}")
            }
            SpatialProfile::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl SpatialProfile {
    pub fn eval(&self, p: &Point3<f64>) -> f64 {
        match self {
            SpatialProfile::Constant(c) => *c,
            SpatialProfile::AffineX { base, slope } => base + slope * p.x,
            SpatialProfile::Custom(f) => f(p),
        }
    }

    fn closed_form(&self) -> bool {
        matches!(
            self,
            SpatialProfile::Constant(_) | SpatialProfile::AffineX { .. }
        )
    }
}

/// Cylindrical region (axis along the altitude coordinate) where every ρ_j
/// is multiplied by `multiplier` when the grid is built.
#[derive(Debug, Clone)]
pub struct CloudRegion {
    pub center_y: f64,
    pub center_z: f64,
    pub radius: f64,
    pub altitude_min: f64,
    pub altitude_max: f64,
    pub multiplier: f64,
}

impl CloudRegion {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let dy = p.y - self.center_y;
        let dz = p.z - self.center_z;
        p.x >= self.altitude_min
            && p.x <= self.altitude_max
            && dy * dy + dz * dz < self.radius * self.radius
    }
}

/// One separable term: spatial profile with its spectral level table.
#[derive(Debug, Clone)]
pub struct AbsorptionTerm {
    pub profile: SpatialProfile,
    pub table: SpectralTable,
}

/// κ_ν(x) = Σ_j ρ_j(x)·κ^j_ν plus an optional cloud modifier.
#[derive(Debug, Clone)]
pub struct AbsorptionField {
    pub terms: Vec<AbsorptionTerm>,
    pub cloud: Option<CloudRegion>,
}

impl AbsorptionField {
    pub fn validate(&self) -> Result<(), AbsorptionError> {
        if self.terms.is_empty() {
            return Err(AbsorptionError::NoTerms);
        }
        if let Some(c) = &self.cloud {
            if !(c.multiplier > 0.0) {
                return Err(AbsorptionError::BadCloudMultiplier(c.multiplier));
            }
        }
        Ok(())
    }
}

/// Cartesian cache of the spatial factors with an outside-domain mask.
/// Samples live at cell centers; interpolation is trilinear on the dual
/// lattice with linear extrapolation in the half-cell margins, so affine
/// profiles are reproduced exactly everywhere in the box.
pub struct BackgroundGrid {
    lo: Point3<f64>,
    cell: Vector3<f64>,
    ncells: [usize; 3],
    samples: Vec<Vec<f64>>,
    outside: Vec<bool>,
    has_outside: bool,
    closed_form: Vec<Option<SpatialProfile>>,
    /// half the smallest cell edge: the line-integral sampling step
    step: f64,
}

impl BackgroundGrid {
    /// Sample every term of `field` at the cell centers of a `resolution`
    /// grid over the mesh bounding box and flag outside cells.
    pub fn build(
        mesh: &Mesh,
        field: &AbsorptionField,
        resolution: [usize; 3],
    ) -> Result<Self, AbsorptionError> {
        field.validate()?;
        if resolution.iter().any(|&n| n < 2) {
            return Err(AbsorptionError::ResolutionTooSmall(resolution));
        }
        let (lo, hi) = mesh.bounding_box();
        let mut cell = Vector3::zeros();
        for k in 0..3 {
            let extent = hi[k] - lo[k];
            if !(extent > 0.0) {
                return Err(AbsorptionError::DegenerateBox { axis: k });
            }
            cell[k] = extent / resolution[k] as f64;
        }
        let n_total = resolution[0] * resolution[1] * resolution[2];
        let locator = TetLocator::new(mesh);
        let mut outside = vec![false; n_total];
        let mut has_outside = false;
        let mut samples = vec![vec![0.0; n_total]; field.terms.len()];

        let center = |ix: usize, iy: usize, iz: usize| {
            Point3::new(
                lo.x + (ix as f64 + 0.5) * cell.x,
                lo.y + (iy as f64 + 0.5) * cell.y,
                lo.z + (iz as f64 + 0.5) * cell.z,
            )
        };
        for iz in 0..resolution[2] {
            for iy in 0..resolution[1] {
                for ix in 0..resolution[0] {
                    let idx = (iz * resolution[1] + iy) * resolution[0] + ix;
                    let c = center(ix, iy, iz);
                    let out = locator.locate(&c).is_none();
                    outside[idx] = out;
                    has_outside |= out;
                    let cloud_factor = match &field.cloud {
                        Some(cl) if cl.contains(&c) => cl.multiplier,
                        _ => 1.0,
                    };
                    for (t, term) in field.terms.iter().enumerate() {
                        samples[t][idx] = term.profile.eval(&c).max(0.0) * cloud_factor;
                    }
                }
            }
        }

        // closed-form fast path only when nothing modifies the profile
        let closed_form = field
            .terms
            .iter()
            .map(|term| {
                if term.profile.closed_form() && field.cloud.is_none() && !has_outside {
                    Some(term.profile.clone())
                } else {
                    None
                }
            })
            .collect();

        let step = 0.5 * cell.x.min(cell.y).min(cell.z);
        Ok(Self {
            lo,
            cell,
            ncells: resolution,
            samples,
            outside,
            has_outside,
            closed_form,
            step,
        })
    }

    pub fn term_count(&self) -> usize {
        self.samples.len()
    }

    pub fn has_outside_cells(&self) -> bool {
        self.has_outside
    }

    fn cell_index(&self, p: &Point3<f64>) -> usize {
        let mut ci = [0usize; 3];
        for k in 0..3 {
            let i = ((p[k] - self.lo[k]) / self.cell[k]).floor() as i64;
            ci[k] = i.clamp(0, self.ncells[k] as i64 - 1) as usize;
        }
        (ci[2] * self.ncells[1] + ci[1]) * self.ncells[0] + ci[0]
    }

    /// True when the cell containing `p` lies outside the mesh.
    pub fn is_outside(&self, p: &Point3<f64>) -> bool {
        self.has_outside && self.outside[self.cell_index(p)]
    }

    /// Trilinear interpolation of term `t` at `p` from the cell-center
    /// samples; fractional offsets are left unclamped so affine data
    /// extrapolates exactly in the boundary margins.
    pub fn sample_profile(&self, t: usize, p: &Point3<f64>) -> f64 {
        if let Some(profile) = &self.closed_form[t] {
            return profile.eval(p).max(0.0);
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for k in 0..3 {
            // offset to the dual lattice of cell centers
            let s = (p[k] - self.lo[k]) / self.cell[k] - 0.5;
            let i = s.floor() as i64;
            let i0 = i.clamp(0, self.ncells[k] as i64 - 2);
            base[k] = i0 as usize;
            frac[k] = s - i0 as f64;
        }
        let data = &self.samples[t];
        let stride_y = self.ncells[0];
        let stride_z = self.ncells[0] * self.ncells[1];
        let mut acc = 0.0;
        for dz in 0..2 {
            let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                    let idx =
                        (base[2] + dz) * stride_z + (base[1] + dy) * stride_y + base[0] + dx;
                    acc += wx * wy * wz * data[idx];
                }
            }
        }
        acc
    }

    /// ∫_[a,b] ρ_t along the segment, or `None` when the segment crosses an
    /// outside-domain cell (the infinitely absorbing extension).
    ///
    /// Sampling uses the midpoint rule on ceil(|b−a|/step) equal pieces with
    /// step = half the smallest cell edge; the sample set is symmetric in
    /// (a, b), so the integral is too.
    pub fn line_integral(&self, t: usize, a: &Point3<f64>, b: &Point3<f64>) -> Option<f64> {
        let len = (b - a).norm();
        if len == 0.0 {
            return Some(0.0);
        }
        if let Some(profile) = &self.closed_form[t] {
            // midpoint of an affine function integrates it exactly
            let mid = Point3::from(0.5 * (a.coords + b.coords));
            return Some(profile.eval(&mid).max(0.0) * len);
        }
        let pieces = (len / self.step).ceil() as usize;
        let pieces = pieces.clamp(1, 100_000);
        let h = len / pieces as f64;
        let dir = (b - a) / len;
        let mut acc = 0.0;
        for i in 0..pieces {
            let s = (i as f64 + 0.5) * h;
            let p = a + dir * s;
            if self.has_outside && self.outside[self.cell_index(&p)] {
                return None;
            }
            acc += self.sample_profile(t, &p);
        }
        Some(acc * h)
    }

    /// exp(−Σ_j κ_j ∫_[a,b] ρ_j); exactly 0 when any line integral crosses
    /// outside the domain.
    pub fn attenuation(&self, levels: &[f64], a: &Point3<f64>, b: &Point3<f64>) -> f64 {
        debug_assert_eq!(levels.len(), self.samples.len());
        let mut depth = 0.0;
        for (t, &level) in levels.iter().enumerate() {
            match self.line_integral(t, a, b) {
                Some(integral) => depth += level * integral,
                None => return 0.0,
            }
        }
        (-depth).exp()
    }

    /// Effective κ at a point for the given per-term levels.
    pub fn kappa_at(&self, levels: &[f64], p: &Point3<f64>) -> f64 {
        levels
            .iter()
            .enumerate()
            .map(|(t, &level)| level * self.sample_profile(t, p))
            .sum()
    }
}
