//! Structured tetrahedral mesh generators.
//!
//! All generators split each hexahedral cell into 6 tetrahedra around the
//! main diagonal (Kuhn split) with a fixed vertex ordering, so meshes are
//! deterministic and face-conforming across cells. Boundary faces are
//! labeled 1..=6 as ground (x = min), top (x = max), y = min, y = max,
//! z = min, z = max.

use nalgebra::Point3;
use std::collections::HashMap;

use super::{Mesh, MeshError};

/// Boundary label of the ground plane produced by the generators.
pub const GROUND_LABEL: i32 = 1;

const KUHN_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

struct StructuredPoints {
    coords: Vec<Point3<f64>>,
    /// structured (ix, iy, iz) per vertex, used for boundary labeling
    lattice: Vec<[usize; 3]>,
    dims: [usize; 3],
}

fn structured_mesh(
    nx: usize,
    ny: usize,
    nz: usize,
    position: impl Fn(usize, usize, usize) -> Point3<f64>,
) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(MeshError::BadParameters(
            "subdivision counts must be at least 1".into(),
        ));
    }
    let dims = [nx + 1, ny + 1, nz + 1];
    let mut pts = StructuredPoints {
        coords: Vec::with_capacity(dims[0] * dims[1] * dims[2]),
        lattice: Vec::with_capacity(dims[0] * dims[1] * dims[2]),
        dims,
    };
    for iz in 0..dims[2] {
        for iy in 0..dims[1] {
            for ix in 0..dims[0] {
                pts.coords.push(position(ix, iy, iz));
                pts.lattice.push([ix, iy, iz]);
            }
        }
    }
    let idx = |ix: usize, iy: usize, iz: usize| -> u32 {
        ((iz * dims[1] + iy) * dims[0] + ix) as u32
    };

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                for perm in &KUHN_PERMS {
                    let mut corner = [ix, iy, iz];
                    let mut tet = [idx(corner[0], corner[1], corner[2]), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = idx(corner[0], corner[1], corner[2]);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    let boundary = extract_boundary(&tets, &pts);
    let tet_count = tets.len();
    Mesh::new(pts.coords, Vec::new(), tets, vec![0; tet_count], boundary)
}

fn extract_boundary(tets: &[[u32; 4]], pts: &StructuredPoints) -> Vec<([u32; 3], i32)> {
    let mut face_count: HashMap<[u32; 3], ([u32; 3], u8)> = HashMap::new();
    for t in tets {
        for f in 0..4 {
            let face = [t[(f + 1) % 4], t[(f + 2) % 4], t[(f + 3) % 4]];
            let mut key = face;
            key.sort_unstable();
            face_count
                .entry(key)
                .and_modify(|e| e.1 += 1)
                .or_insert((face, 1));
        }
    }
    let dims = pts.dims;
    let mut boundary: Vec<([u32; 3], i32)> = Vec::new();
    for (_, (face, count)) in face_count {
        if count != 1 {
            continue;
        }
        let on_plane = |axis: usize, value: usize| {
            face.iter()
                .all(|&v| pts.lattice[v as usize][axis] == value)
        };
        let label = if on_plane(0, 0) {
            1
        } else if on_plane(0, dims[0] - 1) {
            2
        } else if on_plane(1, 0) {
            3
        } else if on_plane(1, dims[1] - 1) {
            4
        } else if on_plane(2, 0) {
            5
        } else {
            6
        };
        boundary.push((face, label));
    }
    // deterministic ordering regardless of hash iteration
    boundary.sort_unstable_by_key(|(f, _)| {
        let mut k = *f;
        k.sort_unstable();
        (k[0], k[1], k[2])
    });
    boundary
}

/// Structured mesh of the box (0, H) × (−L, L) × (−L, L) with `n`
/// subdivisions per unit length on every axis, so the vertex count is
/// (nH + 1)(2Ln + 1)². Ground (x = 0) faces carry label 1.
pub fn box_mesh(l: f64, h: f64, n: usize) -> Result<Mesh, MeshError> {
    if !(l > 0.0) || !(h > 0.0) || n == 0 {
        return Err(MeshError::BadParameters(format!(
            "box_mesh needs L > 0, H > 0, n >= 1 (got L={l}, H={h}, n={n})"
        )));
    }
    let nx = ((n as f64 * h).round() as usize).max(1);
    let nt = ((n as f64 * 2.0 * l).round() as usize).max(1);
    slab_mesh(l, h, nx, nt)
}

/// Structured mesh of the box (0, H) × (−L, L) × (−L, L) with independent
/// vertical and transverse subdivision counts. Flat-ground validation runs
/// use this with nt = nx, mirroring per-axis refinement on a wide slab.
pub fn slab_mesh(l: f64, h: f64, nx: usize, nt: usize) -> Result<Mesh, MeshError> {
    if !(l > 0.0) || !(h > 0.0) {
        return Err(MeshError::BadParameters(format!(
            "slab_mesh needs L > 0 and H > 0 (got L={l}, H={h})"
        )));
    }
    structured_mesh(nx, nt, nt, |ix, iy, iz| {
        Point3::new(
            h * ix as f64 / nx as f64,
            -l + 2.0 * l * iy as f64 / nt as f64,
            -l + 2.0 * l * iz as f64 / nt as f64,
        )
    })
}

/// Box mesh whose ground follows x = hill(y, z), linearly blended to a flat
/// top at x = H. A synthetic stand-in for terrain meshes.
pub fn deformed_box_mesh(
    l: f64,
    h: f64,
    nx: usize,
    nt: usize,
    hill: impl Fn(f64, f64) -> f64,
) -> Result<Mesh, MeshError> {
    if !(l > 0.0) || !(h > 0.0) {
        return Err(MeshError::BadParameters("need L > 0 and H > 0".into()));
    }
    structured_mesh(nx, nt, nt, |ix, iy, iz| {
        let xhat = ix as f64 / nx as f64;
        let y = -l + 2.0 * l * iy as f64 / nt as f64;
        let z = -l + 2.0 * l * iz as f64 / nt as f64;
        let ground = hill(y, z).clamp(0.0, 0.9 * h);
        Point3::new(ground + xhat * (h - ground), y, z)
    })
}

/// Two disjoint unit cubes separated by `gap` along y; the void between them
/// makes the domain non-convex, so segments crossing the gap are occluded.
pub fn two_box_mesh(n: usize, gap: f64) -> Result<Mesh, MeshError> {
    if gap <= 0.0 {
        return Err(MeshError::BadParameters("gap must be positive".into()));
    }
    let a = structured_mesh(n, n, n, |ix, iy, iz| {
        Point3::new(
            ix as f64 / n as f64,
            iy as f64 / n as f64,
            iz as f64 / n as f64,
        )
    })?;
    let offset = 1.0 + gap;
    let b = structured_mesh(n, n, n, |ix, iy, iz| {
        Point3::new(
            ix as f64 / n as f64,
            offset + iy as f64 / n as f64,
            iz as f64 / n as f64,
        )
    })?;

    let shift = a.vertex_count() as u32;
    let mut vertices: Vec<Point3<f64>> = a.vertices().to_vec();
    vertices.extend_from_slice(b.vertices());
    let mut tets: Vec<[u32; 4]> = a.tets().to_vec();
    tets.extend(b.tets().iter().map(|t| t.map(|v| v + shift)));
    let mut tris: Vec<([u32; 3], i32)> = a
        .boundary()
        .iter()
        .map(|t| (t.vertices, t.label))
        .collect();
    tris.extend(
        b.boundary()
            .iter()
            .map(|t| (t.vertices.map(|v| v + shift), t.label)),
    );
    let nt = tets.len();
    Mesh::new(vertices, Vec::new(), tets, vec![0; nt], tris)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimal_box_counts() {
        // n=1, L=1, H=1: (nH+1)(2Ln+1)² = 2*3*3 = 18 vertices
        let m = box_mesh(1.0, 1.0, 1).unwrap();
        assert_eq!(m.vertex_count(), 18);
        assert_eq!(m.tet_count(), 6 * 1 * 2 * 2);
    }

    #[test]
    fn unit_cube_six_tets() {
        let m = slab_mesh(0.5, 1.0, 1, 1).unwrap();
        assert_eq!(m.tet_count(), 6);
        assert_relative_eq!(m.total_volume(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(m.total_boundary_area(), 6.0, max_relative = 1e-12);
    }

    #[test]
    fn volume_partitions_box() {
        for (l, h, n) in [(1.0, 1.0, 2), (2.5, 1.0, 1), (0.7, 0.5, 3)] {
            let m = box_mesh(l, h, n).unwrap();
            assert_relative_eq!(
                m.total_volume(),
                2.0 * l * 2.0 * l * h,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn ground_faces_carry_label_one() {
        let m = slab_mesh(1.0, 1.0, 2, 3).unwrap();
        let ground_area: f64 = m
            .boundary()
            .iter()
            .filter(|b| b.label == GROUND_LABEL)
            .map(|b| b.area)
            .sum();
        assert_relative_eq!(ground_area, 4.0, max_relative = 1e-12);
        // ground normals point down and out of the domain
        for b in m.boundary().iter().filter(|b| b.label == GROUND_LABEL) {
            assert_relative_eq!(b.normal.x, -1.0, max_relative = 1e-12);
        }
        // every boundary label present
        for label in 1..=6 {
            assert!(m.boundary().iter().any(|b| b.label == label));
        }
    }

    #[test]
    fn two_boxes_are_disjoint() {
        let m = two_box_mesh(2, 0.5).unwrap();
        assert_relative_eq!(m.total_volume(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(m.total_boundary_area(), 12.0, max_relative = 1e-12);
    }

    #[test]
    fn deformed_box_keeps_conformity() {
        let m = deformed_box_mesh(1.0, 1.0, 3, 4, |y, z| {
            0.3 * (-((y * y + z * z) / 0.25)).exp()
        })
        .unwrap();
        // all tets valid (Mesh::new would reject degenerates); ground follows the hill
        assert!(m.total_volume() < 4.0);
        assert!(m
            .boundary()
            .iter()
            .filter(|b| b.label == GROUND_LABEL)
            .all(|b| b.normal.x < 0.0));
    }
}
