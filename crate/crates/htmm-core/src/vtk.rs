//! Legacy-VTK ASCII writer for triangulations and nodal fields.

use crate::error::Result;
use crate::field::FieldSolution;
use crate::mesh::TriMesh;
use std::io::Write;
use std::path::Path;

/// Write an unstructured-grid VTK file with the mesh, its material tag as
/// CELL_DATA, and the given nodal fields as POINT_DATA.
pub fn write_vtk(
    path: &Path,
    mesh: &TriMesh,
    fields: &[(&str, &FieldSolution)],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "simulation fields")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.n_nodes())?;
    for p in &mesh.nodes {
        writeln!(out, "{:.17e} {:.17e} 0.0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {} {}", mesh.n_elems(), 4 * mesh.n_elems())?;
    for t in &mesh.tris {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {}", mesh.n_elems())?;
    for _ in 0..mesh.n_elems() {
        writeln!(out, "5")?;
    }
    writeln!(out, "CELL_DATA {}", mesh.n_elems())?;
    writeln!(out, "SCALARS material int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for t in &mesh.tags {
        writeln!(out, "{t}")?;
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_nodes())?;
        for (name, f) in fields {
            match f.ncomp {
                1 => {
                    writeln!(out, "SCALARS {name} double 1")?;
                    writeln!(out, "LOOKUP_TABLE default")?;
                    for n in 0..mesh.n_nodes() {
                        writeln!(out, "{:.17e}", f.value(n, 0))?;
                    }
                }
                2 => {
                    writeln!(out, "VECTORS {name} double")?;
                    for n in 0..mesh.n_nodes() {
                        writeln!(out, "{:.17e} {:.17e} 0.0", f.value(n, 0), f.value(n, 1))?;
                    }
                }
                c => {
                    writeln!(out, "SCALARS {name} double {c}")?;
                    writeln!(out, "LOOKUP_TABLE default")?;
                    for n in 0..mesh.n_nodes() {
                        let comps: Vec<String> =
                            (0..c).map(|k| format!("{:.17e}", f.value(n, k))).collect();
                        writeln!(out, "{}", comps.join(" "))?;
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_unit_cell_mesh;
    use std::sync::Arc;

    #[test]
    fn vtk_output_structure() {
        let cell = build_unit_cell_mesh(2, None).unwrap();
        let mesh = Arc::new(cell.mesh);
        let f = FieldSolution::new(mesh.clone(), 1, (0..9).map(|i| i as f64).collect());
        let dir = std::env::temp_dir().join("htmm_vtk_test");
        let path = dir.join("mesh.vtk");
        write_vtk(&path, &mesh, &[("t", &f)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 9 double"));
        assert!(text.contains("CELLS 8 32"));
        assert!(text.contains("CELL_DATA 8"));
        assert!(text.contains("SCALARS material int 1"));
        assert!(text.contains("POINT_DATA 9"));
        assert!(text.contains("SCALARS t double 1"));
    }
}
