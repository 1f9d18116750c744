//! Tetrahedral meshes with labeled boundary triangles.
//!
//! Coordinates are in reduced length units (1 unit = 10 km). A mesh owns the
//! derived geometry the kernels need: tet volumes and circumradii, boundary
//! areas and outward unit normals, and the vertex-to-tet incidence of the P1
//! hat basis. Meshes are immutable once built and safe to share across
//! threads.

mod generate;
mod medit;
pub mod quadrature;

pub use generate::{box_mesh, deformed_box_mesh, slab_mesh, two_box_mesh, GROUND_LABEL};
pub use medit::{load_mesh, save_mesh};

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("tetrahedron {index} is degenerate (volume {volume:.3e}), vertices {vertices:?}")]
    DegenerateTet {
        index: usize,
        volume: f64,
        vertices: [u32; 4],
    },
    #[error("boundary triangle {index} {vertices:?} does not match any tetrahedron face")]
    DanglingBoundaryTriangle { index: usize, vertices: [u32; 3] },
    #[error("triangle {index} {vertices:?} matches an interior face shared by two tetrahedra")]
    InteriorBoundaryTriangle { index: usize, vertices: [u32; 3] },
    #[error("vertex index {index} out of range (mesh has {count} vertices)")]
    VertexOutOfRange { index: u32, count: usize },
    #[error("mesh has no tetrahedra")]
    Empty,
    #[error("rotation matrix is not a proper rotation (orthogonality defect {defect:.3e})")]
    NotARotation { defect: f64 },
    #[error("invalid mesh parameters: {0}")]
    BadParameters(String),
}

/// Boundary triangle with its label and outward geometry.
#[derive(Debug, Clone)]
pub struct BoundaryTriangle {
    pub vertices: [u32; 3],
    pub label: i32,
    /// Unit normal pointing out of the adjacent tetrahedron.
    pub normal: Vector3<f64>,
    pub area: f64,
    /// Circumradius, used by the near/far quadrature switch.
    pub circumradius: f64,
    /// Index of the unique adjacent tetrahedron.
    pub adjacent_tet: u32,
}

/// Immutable tetrahedral mesh with boundary triangles.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    vertex_labels: Vec<i32>,
    tets: Vec<[u32; 4]>,
    tet_labels: Vec<i32>,
    tet_volumes: Vec<f64>,
    tet_circumradii: Vec<f64>,
    boundary: Vec<BoundaryTriangle>,
    incident_tets: Vec<Vec<u32>>,
    reoriented_tets: usize,
}

/// Signed volume of the tetrahedron (a, b, c, d).
pub fn signed_volume(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, d: &Point3<f64>) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

fn tet_circumradius(p: [&Point3<f64>; 4]) -> f64 {
    // circumcenter from |x - p0|² = |x - pi|², i = 1..3
    let a = Matrix3::from_rows(&[
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
        // nearly degenerate: fall back to the largest edge
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

fn triangle_area_normal(
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> (f64, Vector3<f64>) {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    (0.5 * len, if len > 0.0 { n / len } else { Vector3::zeros() })
}

fn triangle_circumradius(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    let (la, lb, lc) = ((b - c).norm(), (c - a).norm(), (a - b).norm());
    let (area, _) = triangle_area_normal(a, b, c);
    if area > 0.0 {
        la * lb * lc / (4.0 * area)
    } else {
        la.max(lb).max(lc)
    }
}

fn sorted3(v: [u32; 3]) -> [u32; 3] {
    let mut s = v;
    s.sort_unstable();
    s
}

impl Mesh {
    /// Assemble a mesh from raw arrays, computing all derived geometry.
    ///
    /// Tetrahedra with negative orientation are silently re-oriented (the
    /// count is kept); zero-volume tetrahedra and boundary triangles that do
    /// not coincide with exactly one tetrahedron face are errors.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        vertex_labels: Vec<i32>,
        mut tets: Vec<[u32; 4]>,
        tet_labels: Vec<i32>,
        boundary_tris: Vec<([u32; 3], i32)>,
    ) -> Result<Self, MeshError> {
        if tets.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        for t in &tets {
            for &v in t {
                if v as usize >= nv {
                    return Err(MeshError::VertexOutOfRange { index: v, count: nv });
                }
            }
        }
        for (tri, _) in &boundary_tris {
            for &v in tri {
                if v as usize >= nv {
                    return Err(MeshError::VertexOutOfRange { index: v, count: nv });
                }
            }
        }

        let mut scale: f64 = 0.0;
        for t in &tets {
            let p0 = &vertices[t[0] as usize];
            for &v in &t[1..] {
                scale = scale.max((vertices[v as usize] - p0).norm());
            }
        }

        let mut reoriented = 0usize;
        let mut volumes = Vec::with_capacity(tets.len());
        let mut circumradii = Vec::with_capacity(tets.len());
        for (i, t) in tets.iter_mut().enumerate() {
            let mut vol = signed_volume(
                &vertices[t[0] as usize],
                &vertices[t[1] as usize],
                &vertices[t[2] as usize],
                &vertices[t[3] as usize],
            );
            if vol < 0.0 {
                t.swap(2, 3);
                vol = -vol;
                reoriented += 1;
            }
            if vol <= 1e-14 * scale * scale * scale {
                return Err(MeshError::DegenerateTet {
                    index: i,
                    volume: vol,
                    vertices: *t,
                });
            }
            volumes.push(vol);
            circumradii.push(tet_circumradius([
                &vertices[t[0] as usize],
                &vertices[t[1] as usize],
                &vertices[t[2] as usize],
                &vertices[t[3] as usize],
            ]));
        }
        if reoriented > 0 {
            log::warn!("re-oriented {reoriented} inverted tetrahedra");
        }

        // face -> (tet, opposite vertex, count of adjacent tets)
        let mut face_map: HashMap<[u32; 3], (u32, u32, u8)> = HashMap::new();
        for (ti, t) in tets.iter().enumerate() {
            for f in 0..4 {
                let face = [t[(f + 1) % 4], t[(f + 2) % 4], t[(f + 3) % 4]];
                let key = sorted3(face);
                face_map
                    .entry(key)
                    .and_modify(|e| e.2 += 1)
                    .or_insert((ti as u32, t[f], 1));
            }
        }

        let mut boundary = Vec::with_capacity(boundary_tris.len());
        for (i, (tri, label)) in boundary_tris.iter().enumerate() {
            let key = sorted3(*tri);
            let &(tet, opposite, count) = face_map.get(&key).ok_or(
                MeshError::DanglingBoundaryTriangle {
                    index: i,
                    vertices: *tri,
                },
            )?;
            if count != 1 {
                return Err(MeshError::InteriorBoundaryTriangle {
                    index: i,
                    vertices: *tri,
                });
            }
            let (a, b, c) = (
                &vertices[tri[0] as usize],
                &vertices[tri[1] as usize],
                &vertices[tri[2] as usize],
            );
            let (area, mut normal) = triangle_area_normal(a, b, c);
            let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
            if normal.dot(&(vertices[opposite as usize] - centroid)) > 0.0 {
                normal = -normal;
            }
            boundary.push(BoundaryTriangle {
                vertices: *tri,
                label: *label,
                normal,
                area,
                circumradius: triangle_circumradius(a, b, c),
                adjacent_tet: tet,
            });
        }

        let mut incident_tets = vec![Vec::new(); nv];
        for (ti, t) in tets.iter().enumerate() {
            for &v in t {
                incident_tets[v as usize].push(ti as u32);
            }
        }

        let vertex_labels = if vertex_labels.len() == nv {
            vertex_labels
        } else {
            vec![0; nv]
        };
        let tet_labels = if tet_labels.len() == tets.len() {
            tet_labels
        } else {
            vec![0; tets.len()]
        };

        let unused = incident_tets.iter().filter(|v| v.is_empty()).count();
        if unused > 0 {
            log::warn!("{unused} vertices are not referenced by any tetrahedron");
        }

        Ok(Self {
            vertices,
            vertex_labels,
            tets,
            tet_labels,
            tet_volumes: volumes,
            tet_circumradii: circumradii,
            boundary,
            incident_tets,
            reoriented_tets: reoriented,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Point3<f64> {
        &self.vertices[i]
    }

    pub fn vertex_labels(&self) -> &[i32] {
        &self.vertex_labels
    }

    pub fn tets(&self) -> &[[u32; 4]] {
        &self.tets
    }

    pub fn tet_labels(&self) -> &[i32] {
        &self.tet_labels
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        self.tet_volumes[t]
    }

    pub fn tet_circumradius(&self, t: usize) -> f64 {
        self.tet_circumradii[t]
    }

    pub fn boundary(&self) -> &[BoundaryTriangle] {
        &self.boundary
    }

    /// Tetrahedra incident to a vertex (the support of its hat function).
    pub fn incident_tets(&self, v: usize) -> &[u32] {
        &self.incident_tets[v]
    }

    pub fn reoriented_tets(&self) -> usize {
        self.reoriented_tets
    }

    /// Vertices referenced by no tetrahedron (retained but inert).
    pub fn unreferenced_vertices(&self) -> usize {
        self.incident_tets.iter().filter(|v| v.is_empty()).count()
    }

    pub fn total_volume(&self) -> f64 {
        self.tet_volumes.iter().sum()
    }

    pub fn total_boundary_area(&self) -> f64 {
        self.boundary.iter().map(|b| b.area).sum()
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn tet_centroid(&self, t: usize) -> Point3<f64> {
        let tet = &self.tets[t];
        let mut c = Vector3::zeros();
        for &v in tet {
            c += self.vertices[v as usize].coords;
        }
        Point3::from(c / 4.0)
    }

    /// Barycentric coordinates of `p` with respect to tet `t`.
    pub fn barycentric(&self, t: usize, p: &Point3<f64>) -> [f64; 4] {
        let tet = &self.tets[t];
        let v = [
            &self.vertices[tet[0] as usize],
            &self.vertices[tet[1] as usize],
            &self.vertices[tet[2] as usize],
            &self.vertices[tet[3] as usize],
        ];
        let vol = self.tet_volumes[t];
        [
            signed_volume(p, v[1], v[2], v[3]) / vol,
            signed_volume(v[0], p, v[2], v[3]) / vol,
            signed_volume(v[0], v[1], p, v[3]) / vol,
            signed_volume(v[0], v[1], v[2], p) / vol,
        ]
    }

    /// Effective per-triangle normals after applying a proper rotation;
    /// used only when evaluating the sun source, never for geometry.
    pub fn rotated_boundary_normals(
        &self,
        rotation: &Rotation3<f64>,
    ) -> Vec<Vector3<f64>> {
        self.boundary.iter().map(|b| rotation * b.normal).collect()
    }
}

/// Validate that a matrix is a proper rotation (RᵀR = I, det = +1) and wrap
/// it. Rejects reflections and shears.
pub fn rotation_from_matrix(m: &Matrix3<f64>) -> Result<Rotation3<f64>, MeshError> {
    let defect = (m.transpose() * m - Matrix3::identity()).norm();
    let det = m.determinant();
    if defect > 1e-10 || (det - 1.0).abs() > 1e-10 {
        return Err(MeshError::NotARotation {
            defect: defect.max((det - 1.0).abs()),
        });
    }
    Ok(Rotation3::from_matrix_unchecked(*m))
}

/// Uniform spatial hash over tetrahedra for point location.
pub struct TetLocator<'a> {
    mesh: &'a Mesh,
    lo: Point3<f64>,
    cell: Vector3<f64>,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl<'a> TetLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let n = (mesh.tet_count() as f64).cbrt().ceil() as usize;
        let dims = [n.max(1), n.max(1), n.max(1)];
        let mut cell = Vector3::zeros();
        for k in 0..3 {
            cell[k] = ((hi[k] - lo[k]) / dims[k] as f64).max(1e-12);
        }
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (ti, tet) in mesh.tets().iter().enumerate() {
            let mut tlo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
            let mut thi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in tet {
                let p = &mesh.vertices()[v as usize];
                for k in 0..3 {
                    tlo[k] = tlo[k].min(p[k]);
                    thi[k] = thi[k].max(p[k]);
                }
            }
            let idx = |p: &Point3<f64>, k: usize| -> usize {
                (((p[k] - lo[k]) / cell[k]).floor() as i64).clamp(0, dims[k] as i64 - 1) as usize
            };
            for ix in idx(&tlo, 0)..=idx(&thi, 0) {
                for iy in idx(&tlo, 1)..=idx(&thi, 1) {
                    for iz in idx(&tlo, 2)..=idx(&thi, 2) {
                        cells[(iz * dims[1] + iy) * dims[0] + ix].push(ti as u32);
                    }
                }
            }
        }
        Self {
            mesh,
            lo,
            cell,
            dims,
            cells,
        }
    }

    /// Tetrahedron containing `p`, if any. Faces are inclusive within a
    /// small relative tolerance.
    pub fn locate(&self, p: &Point3<f64>) -> Option<u32> {
        let mut ci = [0usize; 3];
        for k in 0..3 {
            let i = ((p[k] - self.lo[k]) / self.cell[k]).floor() as i64;
            if i < -1 || i > self.dims[k] as i64 {
                return None;
            }
            ci[k] = i.clamp(0, self.dims[k] as i64 - 1) as usize;
        }
        let cell = &self.cells[(ci[2] * self.dims[1] + ci[1]) * self.dims[0] + ci[0]];
        for &ti in cell {
            let b = self.mesh.barycentric(ti as usize, p);
            if b.iter().all(|&x| x >= -1e-10) {
                return Some(ti);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn reference_tet() -> Mesh {
        let vertices = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let tets = vec![[0, 1, 2, 3]];
        let tris = vec![
            ([0, 1, 2], 1),
            ([0, 1, 3], 2),
            ([0, 2, 3], 3),
            ([1, 2, 3], 4),
        ];
        Mesh::new(vertices, vec![], tets, vec![], tris).unwrap()
    }

    #[test]
    fn reference_tet_geometry() {
        let m = reference_tet();
        assert_relative_eq!(m.total_volume(), 1.0 / 6.0, max_relative = 1e-14);
        assert_eq!(m.boundary().len(), 4);
        // all normals outward: dot with (centroid - opposite vertex) positive
        for b in m.boundary() {
            let (a, bb, c) = (
                m.vertex(b.vertices[0] as usize),
                m.vertex(b.vertices[1] as usize),
                m.vertex(b.vertices[2] as usize),
            );
            let centroid = Point3::from((a.coords + bb.coords + c.coords) / 3.0);
            let tet = m.tets()[b.adjacent_tet as usize];
            let opposite = tet
                .iter()
                .find(|v| !b.vertices.contains(v))
                .copied()
                .unwrap();
            let to_opposite = m.vertex(opposite as usize) - centroid;
            assert!(b.normal.dot(&to_opposite) < 0.0);
            assert_relative_eq!(b.normal.norm(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn inverted_tet_is_reoriented() {
        let vertices = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        // swapped ordering gives negative volume
        let m = Mesh::new(vertices, vec![], vec![[0, 2, 1, 3]], vec![], vec![]).unwrap();
        assert_eq!(m.reoriented_tets(), 1);
        assert!(m.tet_volume(0) > 0.0);
    }

    #[test]
    fn degenerate_tet_is_an_error() {
        let vertices = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.5, 0.5, 0.0),
        ];
        let err = Mesh::new(vertices, vec![], vec![[0, 1, 2, 3]], vec![], vec![]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateTet { .. }));
    }

    #[test]
    fn dangling_boundary_triangle_is_an_error() {
        let vertices = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(2.0, 2.0, 2.0),
        ];
        let err = Mesh::new(
            vertices,
            vec![],
            vec![[0, 1, 2, 3]],
            vec![],
            vec![([1, 2, 4], 1)],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::DanglingBoundaryTriangle { .. }));
    }

    #[test]
    fn barycentric_coordinates_sum_to_one() {
        let m = reference_tet();
        let p = Point3::new(0.2, 0.3, 0.1);
        let b = m.barycentric(0, &p);
        assert_relative_eq!(b.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert!(b.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn rotation_validation() {
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        assert!(rotation_from_matrix(r.matrix()).is_ok());
        let mut bad = *r.matrix();
        bad[(0, 0)] += 0.05;
        assert!(rotation_from_matrix(&bad).is_err());
        // reflection rejected
        let refl = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!(rotation_from_matrix(&refl).is_err());
    }

    #[test]
    fn rotated_normals_basic() {
        let m = reference_tet();
        let identity = Rotation3::identity();
        let same = m.rotated_boundary_normals(&identity);
        for (a, b) in same.iter().zip(m.boundary()) {
            assert_relative_eq!((a - b.normal).norm(), 0.0, epsilon = 1e-15);
        }
        // 45 degrees about z applied to (1,0,0) -> (√2/2, √2/2, 0)
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_4);
        let n = rot * Vector3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(n.x, 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(n.y, 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(n.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn locator_finds_points() {
        let m = reference_tet();
        let loc = TetLocator::new(&m);
        assert_eq!(loc.locate(&Point3::new(0.1, 0.1, 0.1)), Some(0));
        assert_eq!(loc.locate(&Point3::new(0.9, 0.9, 0.9)), None);
        // boundary point is inside (inclusive)
        assert_eq!(loc.locate(&Point3::new(0.0, 0.0, 0.0)), Some(0));
    }
}
