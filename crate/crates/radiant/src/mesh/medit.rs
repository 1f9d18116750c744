//! MEDIT ASCII mesh reader and writer.
//!
//! Supported subset: `MeshVersionFormatted`, `Dimension 3`, `Vertices`,
//! `Tetrahedra`, `Triangles`, `End`. Indices are 1-based in the file.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Point3;

use super::{Mesh, MeshError};

struct Lines<'a> {
    inner: std::io::Lines<std::io::BufReader<std::fs::File>>,
    path: &'a str,
    lineno: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty, non-comment line.
    fn next_content(&mut self) -> Result<Option<(usize, String)>, MeshError> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(line) => {
                    self.lineno += 1;
                    let line = line.map_err(|source| MeshError::Io {
                        path: self.path.to_string(),
                        source,
                    })?;
                    let body = line.split('#').next().unwrap_or("").trim().to_string();
                    if !body.is_empty() {
                        return Ok(Some((self.lineno, body)));
                    }
                }
            }
        }
    }

    fn expect_content(&mut self, what: &str) -> Result<(usize, String), MeshError> {
        self.next_content()?.ok_or_else(|| MeshError::Parse {
            path: self.path.to_string(),
            line: self.lineno,
            message: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse_fields<T: std::str::FromStr>(
    path: &str,
    line: usize,
    body: &str,
    count: usize,
    what: &str,
) -> Result<Vec<T>, MeshError> {
    let fields: Vec<&str> = body.split_whitespace().collect();
    if fields.len() < count {
        return Err(MeshError::Parse {
            path: path.to_string(),
            line,
            message: format!("expected {count} fields for {what}, found {}", fields.len()),
        });
    }
    let mut out = Vec::with_capacity(count);
    for f in fields.iter().take(count) {
        out.push(f.parse().map_err(|_| MeshError::Parse {
            path: path.to_string(),
            line,
            message: format!("bad {what} value {f:?}"),
        })?);
    }
    Ok(out)
}

/// Load a mesh from a MEDIT ASCII file.
pub fn load_mesh(path: &Path) -> Result<Mesh, MeshError> {
    let pstr = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| MeshError::Io {
        path: pstr.clone(),
        source,
    })?;
    let mut lines = Lines {
        inner: std::io::BufReader::new(file).lines(),
        path: &pstr,
        lineno: 0,
    };

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut vertex_labels: Vec<i32> = Vec::new();
    let mut tets: Vec<[u32; 4]> = Vec::new();
    let mut tet_labels: Vec<i32> = Vec::new();
    let mut tris: Vec<([u32; 3], i32)> = Vec::new();

    while let Some((lineno, body)) = lines.next_content()? {
        let mut words = body.split_whitespace();
        let keyword = words.next().unwrap_or("");
        match keyword {
            "MeshVersionFormatted" => {
                // version may be on the same or the following line
                if words.next().is_none() {
                    lines.expect_content("format version")?;
                }
            }
            "Dimension" => {
                let dim: i64 = match words.next() {
                    Some(w) => w.parse().unwrap_or(-1),
                    None => {
                        let (l, b) = lines.expect_content("dimension")?;
                        parse_fields::<i64>(&pstr, l, &b, 1, "dimension")?[0]
                    }
                };
                if dim != 3 {
                    return Err(MeshError::Parse {
                        path: pstr.clone(),
                        line: lineno,
                        message: format!("unsupported dimension {dim}"),
                    });
                }
            }
            "Vertices" => {
                let (l, b) = lines.expect_content("vertex count")?;
                let count = parse_fields::<usize>(&pstr, l, &b, 1, "vertex count")?[0];
                for _ in 0..count {
                    let (l, b) = lines.expect_content("vertex line")?;
                    let v = parse_fields::<f64>(&pstr, l, &b, 4, "vertex")?;
                    vertices.push(Point3::new(v[0], v[1], v[2]));
                    vertex_labels.push(v[3] as i32);
                }
            }
            "Tetrahedra" => {
                let (l, b) = lines.expect_content("tetrahedron count")?;
                let count = parse_fields::<usize>(&pstr, l, &b, 1, "tetrahedron count")?[0];
                for _ in 0..count {
                    let (l, b) = lines.expect_content("tetrahedron line")?;
                    let v = parse_fields::<i64>(&pstr, l, &b, 5, "tetrahedron")?;
                    let mut t = [0u32; 4];
                    for (k, x) in v.iter().take(4).enumerate() {
                        if *x < 1 {
                            return Err(MeshError::Parse {
                                path: pstr.clone(),
                                line: l,
                                message: format!("tetrahedron index {x} must be >= 1"),
                            });
                        }
                        t[k] = (*x - 1) as u32;
                    }
                    tets.push(t);
                    tet_labels.push(v[4] as i32);
                }
            }
            "Triangles" => {
                let (l, b) = lines.expect_content("triangle count")?;
                let count = parse_fields::<usize>(&pstr, l, &b, 1, "triangle count")?[0];
                for _ in 0..count {
                    let (l, b) = lines.expect_content("triangle line")?;
                    let v = parse_fields::<i64>(&pstr, l, &b, 4, "triangle")?;
                    let mut t = [0u32; 3];
                    for (k, x) in v.iter().take(3).enumerate() {
                        if *x < 1 {
                            return Err(MeshError::Parse {
                                path: pstr.clone(),
                                line: l,
                                message: format!("triangle index {x} must be >= 1"),
                            });
                        }
                        t[k] = (*x - 1) as u32;
                    }
                    tris.push((t, v[3] as i32));
                }
            }
            "End" => break,
            other => {
                return Err(MeshError::Parse {
                    path: pstr.clone(),
                    line: lineno,
                    message: format!("unsupported section {other:?}"),
                });
            }
        }
    }

    Mesh::new(vertices, vertex_labels, tets, tet_labels, tris)
}

/// Write a mesh in MEDIT ASCII. Coordinates are printed with Rust's shortest
/// round-trip float formatting, so load(save(mesh)) reproduces them exactly.
pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    let pstr = path.display().to_string();
    let mk_io = |source| MeshError::Io {
        path: pstr.clone(),
        source,
    };
    let file = std::fs::File::create(path).map_err(mk_io)?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| MeshError::Io {
        path: pstr.clone(),
        source: e,
    };

    writeln!(w, "MeshVersionFormatted 2").map_err(io)?;
    writeln!(w, "Dimension 3").map_err(io)?;
    writeln!(w, "Vertices\n{}", mesh.vertex_count()).map_err(io)?;
    for (p, label) in mesh.vertices().iter().zip(mesh.vertex_labels()) {
        writeln!(w, "{} {} {} {}", p.x, p.y, p.z, label).map_err(io)?;
    }
    writeln!(w, "Tetrahedra\n{}", mesh.tet_count()).map_err(io)?;
    for (t, label) in mesh.tets().iter().zip(mesh.tet_labels()) {
        writeln!(
            w,
            "{} {} {} {} {}",
            t[0] + 1,
            t[1] + 1,
            t[2] + 1,
            t[3] + 1,
            label
        )
        .map_err(io)?;
    }
    writeln!(w, "Triangles\n{}", mesh.boundary().len()).map_err(io)?;
    for b in mesh.boundary() {
        writeln!(
            w,
            "{} {} {} {}",
            b.vertices[0] + 1,
            b.vertices[1] + 1,
            b.vertices[2] + 1,
            b.label
        )
        .map_err(io)?;
    }
    writeln!(w, "End").map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const REFERENCE_TET: &str = "\
MeshVersionFormatted 2
Dimension 3
Vertices
4
0 0 0 0
1 0 0 0
0 1 0 0
0 0 1 0
Tetrahedra
1
1 2 3 4 0
Triangles
4
1 2 3 1
1 2 4 2
1 3 4 3
2 3 4 4
End
";

    #[test]
    fn load_reference_tet() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ref.mesh");
        std::fs::write(&path, REFERENCE_TET).unwrap();
        let m = load_mesh(&path).unwrap();
        assert_eq!(m.vertex_count(), 4);
        assert_eq!(m.tet_count(), 1);
        assert_eq!(m.boundary().len(), 4);
        assert_relative_eq!(m.total_volume(), 1.0 / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn unused_vertex_is_retained() {
        let text = REFERENCE_TET.replace("Vertices\n4", "Vertices\n5").replace(
            "0 0 1 0\nTetrahedra",
            "0 0 1 0\n9 9 9 7\nTetrahedra",
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.mesh");
        std::fs::write(&path, text).unwrap();
        let m = load_mesh(&path).unwrap();
        assert_eq!(m.vertex_count(), 5);
        assert_eq!(m.unreferenced_vertices(), 1);
        // round-trip keeps it
        let out = dir.path().join("roundtrip.mesh");
        save_mesh(&m, &out).unwrap();
        let m2 = load_mesh(&out).unwrap();
        assert_eq!(m2.vertex_count(), 5);
        assert_eq!(m2.vertex(4), &Point3::new(9.0, 9.0, 9.0));
    }

    #[test]
    fn parse_error_reports_line() {
        let bad = REFERENCE_TET.replace("1 2 3 4 0", "1 2 oops 4 0");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mesh");
        std::fs::write(&path, bad).unwrap();
        match load_mesh(&path).unwrap_err() {
            MeshError::Parse { line, .. } => assert_eq!(line, 11),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let m = crate::mesh::box_mesh(1.0, 1.0, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("box.mesh");
        save_mesh(&m, &path).unwrap();
        let m2 = load_mesh(&path).unwrap();
        assert_eq!(m.vertex_count(), m2.vertex_count());
        for (a, b) in m.vertices().iter().zip(m2.vertices()) {
            assert_eq!(a, b, "coordinates must round-trip bit-identically");
        }
        assert_eq!(m.tets(), m2.tets());
    }
}
