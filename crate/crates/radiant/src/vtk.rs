//! Legacy ASCII VTK writer for tetrahedral meshes with point scalars.

use std::io::Write;
use std::path::Path;

use crate::mesh::Mesh;

/// Write an unstructured-grid VTK file with one or more point scalar fields.
pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    scalars: &[(&str, &[f64])],
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "radiant temperature field")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.vertex_count())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    writeln!(w, "CELLS {} {}", mesh.tet_count(), 5 * mesh.tet_count())?;
    for t in mesh.tets() {
        writeln!(w, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.tet_count())?;
    for _ in 0..mesh.tet_count() {
        writeln!(w, "10")?;
    }
    if !scalars.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.vertex_count())?;
        for (name, values) in scalars {
            assert_eq!(values.len(), mesh.vertex_count());
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(w, "{v}")?;
            }
        }
    }
    Ok(())
}
