//! Line-oriented grid files.
//!
//! ```text
//! DFMGRID 1
//! META approximate 0
//! CELLS n            kind cx cy measure aperture   ("-" aperture for matrix)
//! CONNS m            i j area d_i d_j nx ny
//! JUNCTIONS k        px py nb  cell area dist  (repeated nb times)
//! BOUNDARY b         cell area dist nx ny tag
//! POINTS p           x y
//! NODES n            count id...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Floats are written in
//! shortest round-trip form.

use std::io::{BufRead, Write};

use super::{BoundaryFace, CellKind, Connection, FineGrid, GridParts, Junction, JunctionBranch};
use crate::{Error, Result};

pub fn export_grid(grid: &FineGrid, mut w: impl Write) -> Result<()> {
    let p = grid.parts();
    writeln!(w, "DFMGRID 1")?;
    writeln!(w, "META approximate {}", p.approximate as u8)?;
    writeln!(w, "CELLS {}", p.kinds.len())?;
    for c in 0..p.kinds.len() {
        let [x, y] = p.centers[c];
        match p.apertures[c] {
            Some(a) => writeln!(w, "{} {x} {y} {} {a}", p.kinds[c].as_str(), p.measures[c])?,
            None => writeln!(w, "{} {x} {y} {} -", p.kinds[c].as_str(), p.measures[c])?,
        }
    }
    writeln!(w, "CONNS {}", p.connections.len())?;
    for c in &p.connections {
        writeln!(
            w,
            "{} {} {} {} {} {} {}",
            c.cells[0], c.cells[1], c.area, c.dist[0], c.dist[1], c.normal[0], c.normal[1]
        )?;
    }
    writeln!(w, "JUNCTIONS {}", p.junctions.len())?;
    for j in &p.junctions {
        write!(w, "{} {} {}", j.point[0], j.point[1], j.branches.len())?;
        for b in &j.branches {
            write!(w, " {} {} {}", b.cell, b.area, b.dist)?;
        }
        writeln!(w)?;
    }
    writeln!(w, "BOUNDARY {}", p.boundary.len())?;
    for f in &p.boundary {
        writeln!(w, "{} {} {} {} {} {}", f.cell, f.area, f.dist, f.normal[0], f.normal[1], f.tag)?;
    }
    writeln!(w, "POINTS {}", p.points.len())?;
    for q in &p.points {
        writeln!(w, "{} {}", q[0], q[1])?;
    }
    writeln!(w, "NODES {}", p.cell_nodes.len())?;
    for nodes in &p.cell_nodes {
        write!(w, "{}", nodes.len())?;
        for v in nodes {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

struct Lines {
    rows: Vec<(usize, String)>,
    pos: usize,
}

impl Lines {
    fn next(&mut self) -> Option<(usize, Vec<String>)> {
        let (line, text) = self.rows.get(self.pos)?;
        self.pos += 1;
        Some((*line, text.split_whitespace().map(str::to_owned).collect()))
    }

    fn last_line(&self) -> usize {
        self.rows.last().map_or(0, |r| r.0)
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn num<T: std::str::FromStr>(line: usize, tok: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    tok.parse::<T>().map_err(|e| err(line, format!("bad number {tok:?}: {e}")))
}

fn arity(line: usize, toks: &[String], n: usize, what: &str) -> Result<()> {
    if toks.len() != n {
        return Err(err(line, format!("{what} record needs {n} fields, found {}", toks.len())));
    }
    Ok(())
}

pub fn import_grid(reader: impl BufRead) -> Result<FineGrid> {
    let mut rows = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            rows.push((k + 1, t.to_owned()));
        }
    }
    let mut lines = Lines { rows, pos: 0 };
    match lines.next() {
        Some((_, t)) if t == ["DFMGRID", "1"] => {}
        Some((l, _)) => return Err(err(l, "expected header `DFMGRID 1`")),
        None => return Err(err(0, "empty grid file")),
    }

    let mut p = GridParts::default();
    // line numbers of records, for validation messages
    let mut conn_lines = Vec::new();
    let mut junction_lines = Vec::new();
    let mut boundary_lines = Vec::new();
    let mut cell_lines = Vec::new();
    let mut node_lines = Vec::new();

    while let Some((line, head)) = lines.next() {
        let section = head[0].as_str();
        if section == "META" {
            arity(line, &head, 3, "META")?;
            if head[1] == "approximate" {
                p.approximate = num::<u8>(line, &head[2])? != 0;
            }
            continue;
        }
        arity(line, &head, 2, section)?;
        let count: usize = num(line, &head[1])?;
        for _ in 0..count {
            let (l, t) =
                lines.next().ok_or_else(|| err(lines.last_line(), format!("{section} section is truncated")))?;
            match section {
                "CELLS" => {
                    arity(l, &t, 5, "cell")?;
                    let kind = CellKind::parse(&t[0]).ok_or_else(|| err(l, format!("unknown cell kind {:?}", t[0])))?;
                    p.kinds.push(kind);
                    p.centers.push([num(l, &t[1])?, num(l, &t[2])?]);
                    let m: f64 = num(l, &t[3])?;
                    if !(m > 0.0) {
                        return Err(err(l, format!("non-positive cell measure {m}")));
                    }
                    p.measures.push(m);
                    p.apertures.push(if t[4] == "-" { None } else { Some(num(l, &t[4])?) });
                    cell_lines.push(l);
                }
                "CONNS" => {
                    arity(l, &t, 7, "connection")?;
                    p.connections.push(Connection {
                        cells: [num(l, &t[0])?, num(l, &t[1])?],
                        area: num(l, &t[2])?,
                        dist: [num(l, &t[3])?, num(l, &t[4])?],
                        normal: [num(l, &t[5])?, num(l, &t[6])?],
                    });
                    conn_lines.push(l);
                }
                "JUNCTIONS" => {
                    if t.len() < 3 {
                        return Err(err(l, "junction record is too short"));
                    }
                    let nb: usize = num(l, &t[2])?;
                    arity(l, &t, 3 + 3 * nb, "junction")?;
                    let branches = (0..nb)
                        .map(|b| {
                            Ok(JunctionBranch {
                                cell: num(l, &t[3 + 3 * b])?,
                                area: num(l, &t[4 + 3 * b])?,
                                dist: num(l, &t[5 + 3 * b])?,
                            })
                        })
                        .collect::<Result<_>>()?;
                    p.junctions.push(Junction { point: [num(l, &t[0])?, num(l, &t[1])?], branches });
                    junction_lines.push(l);
                }
                "BOUNDARY" => {
                    arity(l, &t, 6, "boundary")?;
                    p.boundary.push(BoundaryFace {
                        cell: num(l, &t[0])?,
                        area: num(l, &t[1])?,
                        dist: num(l, &t[2])?,
                        normal: [num(l, &t[3])?, num(l, &t[4])?],
                        tag: t[5].clone(),
                    });
                    boundary_lines.push(l);
                }
                "POINTS" => {
                    arity(l, &t, 2, "point")?;
                    p.points.push([num(l, &t[0])?, num(l, &t[1])?]);
                }
                "NODES" => {
                    let k: usize = num(l, &t[0])?;
                    arity(l, &t, 1 + k, "node list")?;
                    p.cell_nodes.push(t[1..].iter().map(|v| num(l, v)).collect::<Result<_>>()?);
                    node_lines.push(l);
                }
                other => return Err(err(line, format!("unknown section {other:?}"))),
            }
        }
    }

    let n = p.kinds.len();
    if p.cell_nodes.is_empty() {
        p.cell_nodes = vec![Vec::new(); n];
    }
    // dangling references get reported against their record
    for (c, &l) in p.connections.iter().zip(&conn_lines) {
        if let Some(&bad) = c.cells.iter().find(|&&i| i >= n) {
            return Err(err(l, format!("connection references cell {bad} of {n}")));
        }
    }
    for (j, &l) in p.junctions.iter().zip(&junction_lines) {
        if let Some(b) = j.branches.iter().find(|b| b.cell >= n) {
            return Err(err(l, format!("junction references cell {} of {n}", b.cell)));
        }
    }
    for (f, &l) in p.boundary.iter().zip(&boundary_lines) {
        if f.cell >= n {
            return Err(err(l, format!("boundary face references cell {} of {n}", f.cell)));
        }
    }
    for (nodes, &l) in p.cell_nodes.iter().zip(&node_lines) {
        if let Some(&bad) = nodes.iter().find(|&&v| v >= p.points.len()) {
            return Err(err(l, format!("node list references point {bad} of {}", p.points.len())));
        }
    }
    for (c, &l) in cell_lines.iter().enumerate() {
        let ok = match p.kinds[c] {
            CellKind::Matrix => p.apertures[c].is_none(),
            _ => p.apertures[c].is_some_and(|a| a > 0.0),
        };
        if !ok {
            return Err(err(l, "aperture must be `-` for matrix cells and positive for fracture cells"));
        }
    }
    FineGrid::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::mesh::{build_cartesian_dfm, CartesianSpec, FractureNetwork, IntersectionMode, Segment};

    fn round_trip(g: &FineGrid) -> FineGrid {
        let mut buf = Vec::new();
        export_grid(g, &mut buf).unwrap();
        import_grid(buf.as_slice()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = FractureNetwork::new(vec![
            Segment::new([0.0, 0.5], [1.0, 0.5], 0.01),
            Segment::new([1.0 / 3.0, 0.0], [1.0 / 3.0, 1.0], 0.003),
        ])
        .unwrap();
        for mode in [IntersectionMode::StarDelta, IntersectionMode::Retained] {
            let spec = CartesianSpec::new(Rect::from_size(1.0, 1.0), 6, 4).with_intersections(mode);
            let g = build_cartesian_dfm(&spec, &net).unwrap();
            assert_eq!(round_trip(&g), g);
        }
    }

    #[test]
    fn dangling_connection_names_record() {
        let net = FractureNetwork::new(vec![Segment::new([0.0, 0.5], [1.0, 0.5], 0.01)]).unwrap();
        let g = build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(1.0, 1.0), 2, 2), &net).unwrap();
        let mut buf = Vec::new();
        export_grid(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let conn_header = lines.iter().position(|l| l.starts_with("CONNS")).unwrap();
        lines[conn_header + 1] = "0 999 1 0.5 0.5 1 0".into();
        let bad = lines.join("\n");
        match import_grid(bad.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, conn_header + 2);
                assert!(message.contains("999"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonpositive_measure_rejected() {
        let text = "DFMGRID 1\nCELLS 1\nmatrix 0.5 0.5 0 -\n";
        assert!(matches!(import_grid(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(import_grid("GRID 2\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }
}
