//! Entry evaluation for the volume exchange operator and the boundary
//! source operator on the P1 vertex basis.
//!
//! A volume entry is the quadrature of κ(x′)·ŵ_j(x′)·e^{−∫κ}/(4π|x_i−x′|²)
//! over the support of the hat function ŵ_j; a surface entry integrates
//! ŵ_j(x′)·([(x′−x_i)·n]₊)²/(4π|x′−x_i|⁴)·e^{−∫κ} over the ground
//! triangles of the support (one cosine is the Lambertian emission factor,
//! the second comes from the solid-angle change of variables).
//!
//! Singularities: when x_i belongs to the support of ŵ_j, each incident
//! tetrahedron is split once into 8 children so quadrature nodes stay away
//! from the 1/r² singularity, which is integrable. For the boundary
//! operator the kernel concentrates into a point mass of weight 1/4 (per
//! full surrounding disk) as x_i approaches the plane of the ground; the
//! coplanar limit is added analytically as a diagonal term proportional to
//! the incident-triangle angle sum, and near-coplanar targets are handled
//! by recursive triangle subdivision.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::absorption::BackgroundGrid;
use crate::hmat::Kernel;
use crate::mesh::quadrature::{QuadraturePreset, TetRule, TriRule};
use crate::mesh::Mesh;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("no boundary triangles carry a ground label from {0:?}")]
    NoGroundTriangles(Vec<i32>),
    #[error("dense assembly guard: {rows} x {cols} exceeds the {limit} vertex limit")]
    DenseGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },
    #[error("level count {levels} does not match field term count {terms}")]
    LevelCount { levels: usize, terms: usize },
}

/// Recursion bound for near-singular surface quadrature.
const TRI_SPLIT_MAX_DEPTH: u32 = 6;
/// Split a triangle while the target is closer than this multiple of its
/// diameter.
const TRI_SPLIT_FACTOR: f64 = 0.75;
/// Same controls for the volume elements.
const TET_SPLIT_MAX_DEPTH: u32 = 6;
const TET_SPLIT_FACTOR: f64 = 0.75;

/// Ground-surface connectivity derived from the boundary labels: the
/// column space of the boundary source operator.
pub struct GroundGeometry {
    /// Mesh vertex ids lying on ground triangles, ascending.
    pub vertices: Vec<u32>,
    /// Map mesh vertex id → position in `vertices` (usize::MAX if absent).
    pub vertex_position: Vec<usize>,
    /// Indices into `mesh.boundary()` of the ground triangles.
    pub triangles: Vec<u32>,
    /// Per ground vertex: positions into `triangles` of incident ones.
    pub incident: Vec<Vec<u32>>,
    /// Analytic coplanar point-mass weight θ_i/(8π) per ground vertex.
    pub self_term: Vec<f64>,
    /// Area-weighted vertex normal pointing into the domain; used for the
    /// sun-incidence cosine.
    pub inward_normal: Vec<Vector3<f64>>,
}

impl GroundGeometry {
    pub fn new(mesh: &Mesh, ground_labels: &[i32]) -> Result<Self, KernelError> {
        let triangles: Vec<u32> = mesh
            .boundary()
            .iter()
            .enumerate()
            .filter(|(_, b)| ground_labels.contains(&b.label))
            .map(|(i, _)| i as u32)
            .collect();
        if triangles.is_empty() {
            return Err(KernelError::NoGroundTriangles(ground_labels.to_vec()));
        }
        let mut vertex_set: Vec<u32> = triangles
            .iter()
            .flat_map(|&t| mesh.boundary()[t as usize].vertices)
            .collect();
        vertex_set.sort_unstable();
        vertex_set.dedup();

        let mut vertex_position = vec![usize::MAX; mesh.vertex_count()];
        for (pos, &v) in vertex_set.iter().enumerate() {
            vertex_position[v as usize] = pos;
        }

        let mut incident = vec![Vec::new(); vertex_set.len()];
        let mut self_term = vec![0.0; vertex_set.len()];
        let mut normal_acc = vec![Vector3::zeros(); vertex_set.len()];
        for (tp, &t) in triangles.iter().enumerate() {
            let tri = &mesh.boundary()[t as usize];
            for (corner, &v) in tri.vertices.iter().enumerate() {
                let pos = vertex_position[v as usize];
                incident[pos].push(tp as u32);
                let a = mesh.vertex(tri.vertices[corner] as usize);
                let b = mesh.vertex(tri.vertices[(corner + 1) % 3] as usize);
                let c = mesh.vertex(tri.vertices[(corner + 2) % 3] as usize);
                let angle = (b - a).angle(&(c - a));
                self_term[pos] += angle / (8.0 * std::f64::consts::PI);
                normal_acc[pos] -= tri.normal * tri.area;
            }
        }
        let inward_normal = normal_acc
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vector3::zeros()
                }
            })
            .collect();

        Ok(Self {
            vertices: vertex_set,
            vertex_position,
            triangles,
            incident,
            self_term,
            inward_normal,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Coordinates of the ground vertices, for the column cluster tree.
    pub fn points(&self, mesh: &Mesh) -> Vec<Point3<f64>> {
        self.vertices
            .iter()
            .map(|&v| *mesh.vertex(v as usize))
            .collect()
    }
}

/// Shared context for entry evaluation: mesh geometry, cached absorption
/// field, quadrature rules, and ground connectivity.
pub struct KernelAssembly<'a> {
    pub mesh: &'a Mesh,
    pub grid: &'a BackgroundGrid,
    pub ground: GroundGeometry,
    tet_near: TetRule,
    tet_far: TetRule,
    tri_near: TriRule,
    tri_far: TriRule,
    /// near rule applies within this multiple of the element circumradius
    near_factor: f64,
    /// Gauss nodes and weights on [0, 1] for the cone rule's radial factor
    radial_nodes: Vec<f64>,
    radial_weights: Vec<f64>,
}

impl<'a> KernelAssembly<'a> {
    pub fn new(
        mesh: &'a Mesh,
        grid: &'a BackgroundGrid,
        preset: QuadraturePreset,
        ground_labels: &[i32],
    ) -> Result<Self, KernelError> {
        let (radial_nodes, radial_weights) = crate::stratified::gauss_legendre_01(4);
        Ok(Self {
            mesh,
            grid,
            ground: GroundGeometry::new(mesh, ground_labels)?,
            tet_near: preset.tet_near(),
            tet_far: preset.tet_far(),
            tri_near: preset.tri_near(),
            tri_far: preset.tri_far(),
            near_factor: 2.0,
            radial_nodes,
            radial_weights,
        })
    }

    pub fn check_levels(&self, levels: &[f64]) -> Result<(), KernelError> {
        if levels.len() != self.grid.term_count() {
            return Err(KernelError::LevelCount {
                levels: levels.len(),
                terms: self.grid.term_count(),
            });
        }
        Ok(())
    }

    /// Volume operator entry at (row vertex i, column vertex j) for the
    /// per-term absorption levels of one frequency bin.
    ///
    /// The 1/r² integrand is integrable but concentrates its mass near the
    /// target. Elements having the target as a vertex are integrated with a
    /// cone (Duffy) rule whose radial Jacobian cancels the singularity
    /// exactly; disjoint elements are subdivided recursively while the
    /// target sits closer than a fraction of the element diameter, which
    /// terminates since the ratio improves once the child size drops below
    /// the true separation. Without this treatment the absorbed mass
    /// carries a first-order deficit in the element size.
    pub fn volume_entry(&self, i: usize, j: usize, levels: &[f64]) -> f64 {
        let xi = self.mesh.vertex(i);
        let mut total = 0.0;
        for &t in self.mesh.incident_tets(j) {
            let tet = self.mesh.tets()[t as usize];
            let local_j = tet.iter().position(|&v| v as usize == j).unwrap();
            total += match tet.iter().position(|&v| v as usize == i) {
                Some(local_i) => self.integrate_tet_cone(t as usize, local_i, local_j, levels),
                None => {
                    self.integrate_tet_adaptive(xi, t as usize, local_j, &IDENTITY_CHILD, levels, 0)
                }
            };
        }
        total
    }

    /// Cone rule for elements with the target at a vertex: with
    /// x = apex + s·(y − apex), y on the opposite face, the volume element
    /// 3V·s²·ds·dA/A cancels the 1/(s²|y−apex|²) singularity, leaving a
    /// radial Gauss rule times a face integral. On high-aspect elements the
    /// apex sits close to the opposite face, so the 1/|y−apex|² face factor
    /// is itself near-singular; the face is refined recursively toward the
    /// apex projection (terminates: the apex is strictly off the face).
    fn integrate_tet_cone(&self, t: usize, local_i: usize, local_j: usize, levels: &[f64]) -> f64 {
        let tet = self.mesh.tets()[t];
        let apex = self.mesh.vertex(tet[local_i] as usize);
        let face_locals: [usize; 3] = {
            let mut it = (0..4).filter(|&k| k != local_i);
            [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
        };
        let face = [
            *self.mesh.vertex(tet[face_locals[0]] as usize),
            *self.mesh.vertex(tet[face_locals[1]] as usize),
            *self.mesh.vertex(tet[face_locals[2]] as usize),
        ];
        let identity_bary = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut face_pts: Vec<(Point3<f64>, [f64; 3], f64)> = Vec::with_capacity(32);
        self.cone_face_points(apex, &face, &identity_bary, 0, &mut face_pts);

        let face_area = 0.5 * (face[1] - face[0]).cross(&(face[2] - face[0])).norm();
        if face_area == 0.0 {
            return 0.0;
        }
        let volume = self.mesh.tet_volume(t);
        let mut acc = 0.0;
        for (&s, &ws) in self.radial_nodes.iter().zip(&self.radial_weights) {
            for (y, fbary, w_eff) in &face_pts {
                let hat = if local_j == local_i {
                    1.0 - s
                } else {
                    let pos = face_locals.iter().position(|&k| k == local_j).unwrap();
                    s * fbary[pos]
                };
                if hat <= 0.0 {
                    continue;
                }
                let x = Point3::from(apex.coords + s * (y - apex));
                let kappa = self.grid.kappa_at(levels, &x);
                if kappa <= 0.0 {
                    continue;
                }
                let att = self.grid.attenuation(levels, apex, &x);
                if att == 0.0 {
                    continue;
                }
                let dist2 = (y - apex).norm_squared().max(1e-280);
                acc += ws * w_eff * hat * kappa * att / dist2;
            }
        }
        acc * 3.0 * volume / (4.0 * std::f64::consts::PI * face_area)
    }

    /// Collect quadrature points over the cone's opposite face, splitting
    /// sub-triangles while the apex is closer than a fraction of their
    /// diameter. Emits (position, face barycentrics, effective weight) with
    /// Σ weights·f ≈ ∫_face f dA.
    fn cone_face_points(
        &self,
        apex: &Point3<f64>,
        corners: &[Point3<f64>; 3],
        bary: &[[f64; 3]; 3],
        depth: u32,
        out: &mut Vec<(Point3<f64>, [f64; 3], f64)>,
    ) {
        let e01 = corners[1] - corners[0];
        let e02 = corners[2] - corners[0];
        let diam = e01
            .norm()
            .max(e02.norm())
            .max((corners[2] - corners[1]).norm());
        let centroid =
            Point3::from((corners[0].coords + corners[1].coords + corners[2].coords) / 3.0);
        let dist = corners
            .iter()
            .map(|c| (c - apex).norm())
            .fold((centroid - apex).norm(), f64::min);
        if depth < TET_SPLIT_MAX_DEPTH && dist < TET_SPLIT_FACTOR * diam {
            let mid =
                |a: usize, b: usize| Point3::from(0.5 * (corners[a].coords + corners[b].coords));
            let bmid = |a: usize, b: usize| {
                [
                    0.5 * (bary[a][0] + bary[b][0]),
                    0.5 * (bary[a][1] + bary[b][1]),
                    0.5 * (bary[a][2] + bary[b][2]),
                ]
            };
            let (m01, m12, m02) = (mid(0, 1), mid(1, 2), mid(0, 2));
            let (b01, b12, b02) = (bmid(0, 1), bmid(1, 2), bmid(0, 2));
            let children: [([Point3<f64>; 3], [[f64; 3]; 3]); 4] = [
                ([corners[0], m01, m02], [bary[0], b01, b02]),
                ([m01, corners[1], m12], [b01, bary[1], b12]),
                ([m02, m12, corners[2]], [b02, b12, bary[2]]),
                ([m01, m12, m02], [b01, b12, b02]),
            ];
            for (c, b) in &children {
                self.cone_face_points(apex, c, b, depth + 1, out);
            }
            return;
        }
        let area = 0.5 * e01.cross(&e02).norm();
        for (q, w) in self.tri_near.points.iter().zip(&self.tri_near.weights) {
            let y = Point3::from(
                q[0] * corners[0].coords + q[1] * corners[1].coords + q[2] * corners[2].coords,
            );
            let fb = [
                q[0] * bary[0][0] + q[1] * bary[1][0] + q[2] * bary[2][0],
                q[0] * bary[0][1] + q[1] * bary[1][1] + q[2] * bary[2][1],
                q[0] * bary[0][2] + q[1] * bary[1][2] + q[2] * bary[2][2],
            ];
            out.push((y, fb, 2.0 * area * w));
        }
    }

    /// Quadrature over one (sub-)tetrahedron given by parent-barycentric
    /// corners, refining toward the target while it sits within
    /// TET_SPLIT_FACTOR of the element diameter. Midpoint children carry
    /// exactly 1/8 of the parent volume per level.
    fn integrate_tet_adaptive(
        &self,
        xi: &Point3<f64>,
        t: usize,
        local_j: usize,
        child: &[[f64; 4]; 4],
        levels: &[f64],
        depth: u32,
    ) -> f64 {
        let tet = self.mesh.tets()[t];
        let verts = [
            self.mesh.vertex(tet[0] as usize),
            self.mesh.vertex(tet[1] as usize),
            self.mesh.vertex(tet[2] as usize),
            self.mesh.vertex(tet[3] as usize),
        ];
        let to_point = |bary: &[f64; 4]| {
            let mut x = Vector3::zeros();
            for k in 0..4 {
                x += bary[k] * verts[k].coords;
            }
            Point3::from(x)
        };
        let corners = [
            to_point(&child[0]),
            to_point(&child[1]),
            to_point(&child[2]),
            to_point(&child[3]),
        ];
        let mut diam = 0.0f64;
        for a in 0..4 {
            for b in (a + 1)..4 {
                diam = diam.max((corners[a] - corners[b]).norm());
            }
        }
        let centroid = Point3::from(
            (corners[0].coords + corners[1].coords + corners[2].coords + corners[3].coords) / 4.0,
        );
        let dist = corners
            .iter()
            .map(|c| (c - xi).norm())
            .fold((centroid - xi).norm(), f64::min);

        if depth < TET_SPLIT_MAX_DEPTH && dist < TET_SPLIT_FACTOR * diam {
            let mut acc = 0.0;
            for sub in tet_children() {
                // compose: sub-corner positions in the parent's barycentrics
                let mut composed = [[0.0f64; 4]; 4];
                for (ci, sc) in sub.iter().enumerate() {
                    for k in 0..4 {
                        for (pi, pc) in child.iter().enumerate() {
                            composed[ci][k] += sc[pi] * pc[k];
                        }
                    }
                }
                acc += self.integrate_tet_adaptive(xi, t, local_j, &composed, levels, depth + 1);
            }
            return acc;
        }

        let child_volume = self.mesh.tet_volume(t) * 0.125f64.powi(depth as i32);
        let rule = if dist < self.near_factor * circumradius4(&corners) {
            &self.tet_near
        } else {
            &self.tet_far
        };
        let mut acc = 0.0;
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            // barycentric coordinates of the quadrature node in the parent
            let mut parent = [0.0f64; 4];
            for (corner, &bc) in child.iter().zip(q) {
                for k in 0..4 {
                    parent[k] += bc * corner[k];
                }
            }
            let xq = to_point(&parent);
            let hat = parent[local_j];
            if hat <= 0.0 {
                continue;
            }
            let r2 = (xq - xi).norm_squared().max(1e-280);
            let kappa = self.grid.kappa_at(levels, &xq);
            if kappa <= 0.0 {
                continue;
            }
            let att = self.grid.attenuation(levels, xi, &xq);
            if att == 0.0 {
                continue;
            }
            acc += w * hat * kappa * att / (4.0 * std::f64::consts::PI * r2);
        }
        // weights sum to 1/6, so scale by 6 × (sub-)volume
        acc * 6.0 * child_volume
    }

    /// Boundary source operator entry at (row vertex i, ground column jl).
    pub fn surface_entry(&self, i: usize, jl: usize, levels: &[f64]) -> f64 {
        let j = self.ground.vertices[jl] as usize;
        let xi = self.mesh.vertex(i);
        let mut total = if i == j { self.ground.self_term[jl] } else { 0.0 };
        for &tp in &self.ground.incident[jl] {
            let tri = &self.mesh.boundary()[self.ground.triangles[tp as usize] as usize];
            if tri.vertices.iter().any(|&v| v as usize == i) {
                // x_i is a corner: the integrand vanishes on the triangle's
                // own plane; its point-mass limit is the self term above
                continue;
            }
            let local_j = tri.vertices.iter().position(|&v| v as usize == j).unwrap();
            let corners = [
                *self.mesh.vertex(tri.vertices[0] as usize),
                *self.mesh.vertex(tri.vertices[1] as usize),
                *self.mesh.vertex(tri.vertices[2] as usize),
            ];
            let mut hats = [0.0; 3];
            hats[local_j] = 1.0;
            // in-plane targets see a vanishing integrand: skip exactly
            let plane_defect = (corners[0] - xi).dot(&tri.normal).abs()
                + (corners[1] - xi).dot(&tri.normal).abs()
                + (corners[2] - xi).dot(&tri.normal).abs();
            let scale = (corners[1] - corners[0]).norm() + (corners[2] - corners[0]).norm();
            if plane_defect <= 1e-13 * scale.max(1e-300) {
                continue;
            }
            total += self.integrate_tri(xi, &corners, &hats, &tri.normal, levels, 0);
        }
        total
    }

    fn integrate_tri(
        &self,
        xi: &Point3<f64>,
        corners: &[Point3<f64>; 3],
        hats: &[f64; 3],
        normal: &Vector3<f64>,
        levels: &[f64],
        depth: u32,
    ) -> f64 {
        let e01 = corners[1] - corners[0];
        let e02 = corners[2] - corners[0];
        let e12 = corners[2] - corners[1];
        let diam = e01.norm().max(e02.norm()).max(e12.norm());
        let centroid = Point3::from((corners[0].coords + corners[1].coords + corners[2].coords) / 3.0);
        let dist = (centroid - xi)
            .norm()
            .min((corners[0] - xi).norm())
            .min((corners[1] - xi).norm())
            .min((corners[2] - xi).norm());

        if depth < TRI_SPLIT_MAX_DEPTH && dist < TRI_SPLIT_FACTOR * diam {
            // refine toward the near-singular peak
            let m01 = Point3::from(0.5 * (corners[0].coords + corners[1].coords));
            let m12 = Point3::from(0.5 * (corners[1].coords + corners[2].coords));
            let m02 = Point3::from(0.5 * (corners[0].coords + corners[2].coords));
            let h01 = 0.5 * (hats[0] + hats[1]);
            let h12 = 0.5 * (hats[1] + hats[2]);
            let h02 = 0.5 * (hats[0] + hats[2]);
            let children: [([Point3<f64>; 3], [f64; 3]); 4] = [
                ([corners[0], m01, m02], [hats[0], h01, h02]),
                ([m01, corners[1], m12], [h01, hats[1], h12]),
                ([m02, m12, corners[2]], [h02, h12, hats[2]]),
                ([m01, m12, m02], [h01, h12, h02]),
            ];
            return children
                .iter()
                .map(|(c, h)| self.integrate_tri(xi, c, h, normal, levels, depth + 1))
                .sum();
        }

        let area = 0.5 * e01.cross(&e02).norm();
        if area == 0.0 {
            return 0.0;
        }
        let circumradius = {
            let (la, lb, lc) = (e12.norm(), e02.norm(), e01.norm());
            la * lb * lc / (4.0 * area)
        };
        let rule = if dist < self.near_factor * circumradius {
            &self.tri_near
        } else {
            &self.tri_far
        };

        let mut acc = 0.0;
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = Vector3::zeros();
            let mut hat = 0.0;
            for k in 0..3 {
                x += q[k] * corners[k].coords;
                hat += q[k] * hats[k];
            }
            if hat <= 0.0 {
                continue;
            }
            let xq = Point3::from(x);
            let d = xq - xi;
            let cos_pos = d.dot(normal);
            if cos_pos <= 0.0 {
                continue;
            }
            let r2 = d.norm_squared().max(1e-280);
            let att = self.grid.attenuation(levels, xi, &xq);
            if att == 0.0 {
                continue;
            }
            acc += w * hat * att * (cos_pos * cos_pos) / (4.0 * std::f64::consts::PI * r2 * r2);
        }
        // weights sum to 1/2, so scale by 2 × area
        acc * 2.0 * area
    }
}

/// Hat-function integral ∫ ŵ_j over the support (= Σ V_t/4), used by the
/// far-field sanity oracle in tests and reports.
pub fn hat_integral(mesh: &Mesh, j: usize) -> f64 {
    mesh.incident_tets(j)
        .iter()
        .map(|&t| mesh.tet_volume(t as usize) / 4.0)
        .sum()
}

const IDENTITY_CHILD: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// Circumradius of the tetrahedron spanned by four points, with a
/// largest-edge fallback for nearly degenerate shapes.
fn circumradius4(p: &[Point3<f64>; 4]) -> f64 {
    let a = nalgebra::Matrix3::from_rows(&[
        (p[1] - p[0]).transpose(),
        (p[2] - p[0]).transpose(),
        (p[3] - p[0]).transpose(),
    ]);
    let rhs = Vector3::new(
        0.5 * (p[1].coords.norm_squared() - p[0].coords.norm_squared()),
        0.5 * (p[2].coords.norm_squared() - p[0].coords.norm_squared()),
        0.5 * (p[3].coords.norm_squared() - p[0].coords.norm_squared()),
    );
    match a.lu().solve(&rhs) {
        Some(center) => (Point3::from(center) - p[0]).norm(),
        None => {
            let mut r: f64 = 0.0;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    r = r.max((p[i] - p[j]).norm());
                }
            }
            r
        }
    }
}

/// The 8 children of the midpoint subdivision, as parent-barycentric
/// corners: 4 corner tets plus the central octahedron split along the
/// m01-m23 diagonal.
fn tet_children() -> [[[f64; 4]; 4]; 8] {
    let e = |k: usize| {
        let mut v = [0.0; 4];
        v[k] = 1.0;
        v
    };
    let m = |a: usize, b: usize| {
        let mut v = [0.0; 4];
        v[a] = 0.5;
        v[b] = 0.5;
        v
    };
    [
        [e(0), m(0, 1), m(0, 2), m(0, 3)],
        [m(0, 1), e(1), m(1, 2), m(1, 3)],
        [m(0, 2), m(1, 2), e(2), m(2, 3)],
        [m(0, 3), m(1, 3), m(2, 3), e(3)],
        [m(0, 1), m(2, 3), m(0, 2), m(0, 3)],
        [m(0, 1), m(2, 3), m(0, 3), m(1, 3)],
        [m(0, 1), m(2, 3), m(1, 3), m(1, 2)],
        [m(0, 1), m(2, 3), m(1, 2), m(0, 2)],
    ]
}

/// Volume operator for one frequency bin as an H-matrix kernel: square over
/// all mesh vertices.
pub struct VolumeKernel<'a> {
    pub assembly: &'a KernelAssembly<'a>,
    pub levels: Vec<f64>,
}

impl Kernel for VolumeKernel<'_> {
    fn nrows(&self) -> usize {
        self.assembly.mesh.vertex_count()
    }
    fn ncols(&self) -> usize {
        self.assembly.mesh.vertex_count()
    }
    fn eval(&self, i: usize, j: usize) -> f64 {
        self.assembly.volume_entry(i, j, &self.levels)
    }
}

/// Boundary source operator for one frequency bin: rows over all vertices,
/// columns over the ground vertices.
pub struct SurfaceKernel<'a> {
    pub assembly: &'a KernelAssembly<'a>,
    pub levels: Vec<f64>,
}

impl Kernel for SurfaceKernel<'_> {
    fn nrows(&self) -> usize {
        self.assembly.mesh.vertex_count()
    }
    fn ncols(&self) -> usize {
        self.assembly.ground.vertex_count()
    }
    fn eval(&self, i: usize, j: usize) -> f64 {
        self.assembly.surface_entry(i, j, &self.levels)
    }
}

/// Assemble the full matrix of a kernel, row-major. Test oracle for the
/// compressed path; guarded against accidental large-N use.
pub fn assemble_dense<K: Kernel>(kernel: &K, limit: usize) -> Result<Vec<f64>, KernelError> {
    let (m, n) = (kernel.nrows(), kernel.ncols());
    if m.max(n) > limit || limit > 5000 {
        return Err(KernelError::DenseGuard {
            rows: m,
            cols: n,
            limit: limit.min(5000),
        });
    }
    let mut data = vec![0.0; m * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = kernel.eval(i, j);
        }
    });
    Ok(data)
}

/// Map each mesh vertex to its ground position, or usize::MAX.
pub fn ground_position_map(ground: &GroundGeometry) -> &[usize] {
    &ground.vertex_position
}

/// Convenience for tests: index of the mesh vertex closest to a point.
pub fn nearest_vertex(mesh: &Mesh, p: &Point3<f64>) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for (i, v) in mesh.vertices().iter().enumerate() {
        let d = (v - p).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Deterministic uniform directions on the unit sphere (Fibonacci lattice),
/// used by the angular Monte-Carlo oracles in tests.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            Vector3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

/// Used by reports: ground vertex angle-sum map (2π inside, less at rims).
pub fn ground_angle_fraction(ground: &GroundGeometry) -> HashMap<u32, f64> {
    ground
        .vertices
        .iter()
        .zip(&ground.self_term)
        .map(|(&v, &s)| (v, s * 8.0 * std::f64::consts::PI / (2.0 * std::f64::consts::PI)))
        .collect()
}
