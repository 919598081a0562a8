//! Artifact emitters: VTK legacy ASCII (unstructured grids with point data,
//! structured points for voxel masks), full-precision CSV, and JSON-lines
//! solve reports. All output is deterministic: floats print in Rust's
//! shortest round-trip form, iteration orders are fixed, and wall-clock
//! timings never enter a file.

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::mesh::Mesh;
use crate::solver::SolveReport;
use std::fmt::Write as _;
use std::path::Path;

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// VTK legacy UNSTRUCTURED_GRID with one or more nodal scalar fields and
/// the element region tags as cell data.
pub fn vtk_unstructured(mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<String> {
    for (name, values) in fields {
        if values.len() != mesh.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "field '{name}' has {} values for {} nodes",
                values.len(),
                mesh.n_nodes()
            )));
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "pbesolve fields");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:?} {:?} 0", p[0], p[1]);
    }
    let f = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {f} {}", 4 * f);
    for tri in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {f}");
    for _ in 0..f {
        let _ = writeln!(s, "5");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
        for (name, values) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1");
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for v in *values {
                let _ = writeln!(s, "{v:?}");
            }
        }
    }
    let _ = writeln!(s, "CELL_DATA {f}");
    let _ = writeln!(s, "SCALARS region int 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for tag in &mesh.elem_region {
        let _ = writeln!(s, "{}", tag.code());
    }
    Ok(s)
}

/// VTK legacy STRUCTURED_POINTS with integer cell values (as point data on
/// the cell-center lattice).
pub fn vtk_structured_points(grid: &VoxelGrid, name: &str, values: &[i32]) -> Result<String> {
    if values.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "mask has {} values for {} cells",
            values.len(),
            grid.len()
        )));
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "pbesolve voxel mask");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(
        s,
        "DIMENSIONS {} {} {}",
        grid.extents[0], grid.extents[1], grid.extents[2]
    );
    let o = grid.cell_center(0, 0, 0);
    let _ = writeln!(s, "ORIGIN {:?} {:?} {:?}", o[0], o[1], o[2]);
    let _ = writeln!(s, "SPACING {0:?} {0:?} {0:?}", grid.spacing);
    let _ = writeln!(s, "POINT_DATA {}", grid.len());
    let _ = writeln!(s, "SCALARS {name} int 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    Ok(s)
}

/// CSV with a header row; numeric cells are expected preformatted in full
/// precision (`{:?}` round-trip form).
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    s.push_str(&header.join(","));
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// JSON-lines report: a summary object first, then one line per accepted
/// Newton iteration.
pub fn report_jsonl(report: &SolveReport) -> Result<String> {
    let mut s = serde_json::to_string(report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    for record in &report.history {
        s.push_str(
            &serde_json::to_string(record).map_err(|e| Error::InvalidInput(e.to_string()))?,
        );
        s.push('\n');
    }
    Ok(s)
}

pub fn emit(path: &Path, content: &str) -> Result<()> {
    write_file(path, content)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RegionTag;

    fn two_triangle_mesh() -> Mesh {
        Mesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            elem_region: vec![RegionTag::Ions, RegionTag::Molecule],
            boundary_nodes: vec![0, 1, 2, 3],
            interface_nodes: vec![],
            circles: vec![],
        }
    }

    #[test]
    fn vtk_two_triangle_golden() {
        let mesh = two_triangle_mesh();
        let field = [0.0, 0.5, 1.0, 0.25];
        let text = vtk_unstructured(&mesh, &[("u", &field)]).unwrap();
        let expected = "\
# vtk DataFile Version 3.0
pbesolve fields
ASCII
DATASET UNSTRUCTURED_GRID
POINTS 4 double
0.0 0.0 0
1.0 0.0 0
1.0 1.0 0
0.0 1.0 0
CELLS 2 8
3 0 1 2
3 0 2 3
CELL_TYPES 2
5
5
POINT_DATA 4
SCALARS u double 1
LOOKUP_TABLE default
0.0
0.5
1.0
0.25
CELL_DATA 2
SCALARS region int 1
LOOKUP_TABLE default
2
0
";
        assert_eq!(text, expected);
    }

    #[test]
    fn empty_table_is_header_only() {
        let s = csv_table(&["a", "b"], &[]);
        assert_eq!(s, "a,b\n");
    }

    #[test]
    fn csv_numbers_roundtrip_bit_exact() {
        let values = [
            1.0 / 3.0,
            std::f64::consts::PI,
            -1.2345678901234567e-300,
            6.02214076e23,
        ];
        let rows: Vec<Vec<String>> = values.iter().map(|v| vec![format!("{v:?}")]).collect();
        let table = csv_table(&["x"], &rows);
        for (line, &v) in table.lines().skip(1).zip(&values) {
            let parsed: f64 = line.parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn structured_points_shape() {
        let grid = VoxelGrid::new([0.0, 0.0, 0.0], 0.5, [2, 3, 1], 2).unwrap();
        let values = vec![1; 6];
        let text = vtk_structured_points(&grid, "mask", &values).unwrap();
        assert!(text.contains("DIMENSIONS 2 3 1"));
        assert!(text.contains("SCALARS mask int 1"));
        assert_eq!(text.lines().filter(|l| *l == "1").count(), 6);
    }
}
