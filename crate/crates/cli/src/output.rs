//! Legacy VTK and CSV artifacts.

use std::io::Write;

use dfmheat::mesh::FineGrid;

use crate::CliError;

const VTK_VERTEX: u8 = 1;
const VTK_LINE: u8 = 3;
const VTK_TRIANGLE: u8 = 5;
const VTK_POLYGON: u8 = 7;
const VTK_QUAD: u8 = 9;

fn io_err(e: std::io::Error) -> CliError {
    CliError::Output { path: "<stream>".into(), source: e }
}

/// ASCII legacy unstructured grid. Matrix cells become quads, triangles or
/// polygons, fracture cells lines and intersection cells vertices. Cells
/// without node data are written as a vertex at their centre.
pub fn write_vtk(mut w: impl Write, title: &str, grid: &FineGrid, fields: &[(&str, &[f64])]) -> Result<(), CliError> {
    let n = grid.cell_count();
    for (name, values) in fields {
        if values.len() != n {
            return Err(CliError::Config(format!("field {name:?} has {} values for {n} cells", values.len())));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(CliError::Config(format!("field name {name:?} must be a non-empty word")));
        }
    }
    let mut points = grid.points().to_vec();
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut types = Vec::with_capacity(n);
    for c in 0..n {
        let nodes = grid.cell_nodes(c);
        let ty = match nodes.len() {
            0 => {
                points.push(grid.center(c));
                cells.push(vec![points.len() - 1]);
                types.push(VTK_VERTEX);
                continue;
            }
            1 => VTK_VERTEX,
            2 => VTK_LINE,
            3 => VTK_TRIANGLE,
            4 => VTK_QUAD,
            _ => VTK_POLYGON,
        };
        cells.push(nodes.to_vec());
        types.push(ty);
    }
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let mut out = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", points.len());
    for p in &points {
        let _ = writeln!(out, "{} {} 0", p[0], p[1]);
    }
    let size: usize = cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(out, "CELLS {n} {size}");
    for c in &cells {
        let _ = write!(out, "{}", c.len());
        for v in c {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "CELL_TYPES {n}");
    for t in &types {
        let _ = writeln!(out, "{t}");
    }
    if !fields.is_empty() {
        let _ = writeln!(out, "CELL_DATA {n}");
        for (name, values) in fields {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in *values {
                let _ = writeln!(out, "{v}");
            }
        }
    }
    w.write_all(out.as_bytes()).map_err(io_err)
}

/// Writes a header and rows, every value with 17 significant digits.
pub fn write_csv(w: impl Write, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Config(format!("csv output: {e}"));
    wr.write_record(header).map_err(csv_err)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(CliError::Config(format!("csv row {i} has {} values for {} columns", row.len(), header.len())));
        }
        wr.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(csv_err)?;
    }
    wr.flush().map_err(io_err)
}

/// One column per series; missing values are written as `nan`.
pub fn columns_to_rows(columns: &[&[f64]]) -> Vec<Vec<f64>> {
    let len = columns.iter().map(|c| c.len()).max().unwrap_or(0);
    (0..len).map(|i| columns.iter().map(|c| c.get(i).copied().unwrap_or(f64::NAN)).collect()).collect()
}
