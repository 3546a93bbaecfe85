//! Discrete fracture-matrix grids.
//!
//! A [`FineGrid`] holds 2D matrix cells and co-dimension one fracture cells.
//! Fracture cells carry their aperture as a volumetric factor. Cell-to-cell
//! coupling comes in two flavours:
//!
//! * [`Connection`]: an ordinary two-point face between two cells;
//! * [`Junction`]: a fracture intersection whose centre unknown has been
//!   eliminated (star-delta), coupling every pair of incident branches.
//!
//! Both are flattened into a single list of [`Link`]s, which is the index
//! space used for transmissibilities and fluxes everywhere else.

mod cartesian;
mod io;
mod network;

pub use cartesian::{build_cartesian_dfm, rasterize_dfm, CartesianSpec, IntersectionMode};
pub use io::{export_grid, import_grid};
pub use network::{FractureNetwork, Segment};

use rayon::prelude::*;

use crate::geometry::{distance, point_segment_distance, Point};
use crate::sparse::SparseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKind {
    Matrix,
    Fracture,
    /// A retained 0-d cell where fractures cross.
    Intersection,
}

impl CellKind {
    /// Fracture and intersection cells both belong to the fracture network.
    pub fn is_fracture(self) -> bool {
        !matches!(self, CellKind::Matrix)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Matrix => "matrix",
            CellKind::Fracture => "fracture",
            CellKind::Intersection => "intersection",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matrix" => Some(CellKind::Matrix),
            "fracture" => Some(CellKind::Fracture),
            "intersection" => Some(CellKind::Intersection),
            _ => None,
        }
    }
}

/// A two-point face between `cells[0]` and `cells[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    pub cells: [usize; 2],
    /// Face measure: edge length, or aperture for along-fracture faces.
    pub area: f64,
    /// Centre-to-face distances for both sides.
    pub dist: [f64; 2],
    /// Unit normal pointing from `cells[0]` to `cells[1]`.
    pub normal: Point,
}

impl Connection {
    /// `area * coeff / dist` on one side of the face.
    pub fn half_transmissibility(&self, side: usize, coeff: f64) -> Result<f64> {
        half_transmissibility(self.area, coeff, self.dist[side])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionBranch {
    pub cell: usize,
    pub area: f64,
    pub dist: f64,
}

/// Fracture intersection eliminated by star-delta transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub point: Point,
    pub branches: Vec<JunctionBranch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub area: f64,
    pub dist: f64,
    /// Outward unit normal.
    pub normal: Point,
    pub tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkSource {
    Connection(usize),
    Junction { junction: usize, branches: [usize; 2] },
}

/// A pair of coupled cells, positive orientation from `cells[0]` to `cells[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub cells: [usize; 2],
    pub source: LinkSource,
}

/// `area * coeff / dist`, the conductance from a cell centre to a face.
pub fn half_transmissibility(area: f64, coeff: f64, dist: f64) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::Geometry(format!("centre-to-face distance {dist} must be positive")));
    }
    Ok(area * coeff / dist)
}

/// Raw ingredients of a grid; [`FineGrid::new`] validates them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridParts {
    pub kinds: Vec<CellKind>,
    pub centers: Vec<Point>,
    pub measures: Vec<f64>,
    pub apertures: Vec<Option<f64>>,
    pub connections: Vec<Connection>,
    pub junctions: Vec<Junction>,
    pub boundary: Vec<BoundaryFace>,
    pub points: Vec<Point>,
    pub cell_nodes: Vec<Vec<usize>>,
    /// Set when fractures were snapped onto grid edges.
    pub approximate: bool,
}

/// Immutable DFM grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FineGrid {
    parts: GridParts,
    links: Vec<Link>,
    adj_offsets: Vec<usize>,
    adj: Vec<(usize, usize)>,
}

impl FineGrid {
    pub fn new(parts: GridParts) -> Result<Self> {
        let n = parts.kinds.len();
        let geo = |m: String| Err(Error::Geometry(m));
        if n == 0 {
            return geo("grid has no cells".into());
        }
        if parts.centers.len() != n
            || parts.measures.len() != n
            || parts.apertures.len() != n
            || parts.cell_nodes.len() != n
        {
            return geo("per-cell arrays have inconsistent lengths".into());
        }
        for c in 0..n {
            let m = parts.measures[c];
            if !(m > 0.0 && m.is_finite()) {
                return geo(format!("cell {c} has non-positive measure {m}"));
            }
            match (parts.kinds[c], parts.apertures[c]) {
                (CellKind::Matrix, None) => {}
                (CellKind::Matrix, Some(_)) => return geo(format!("matrix cell {c} carries an aperture")),
                (_, Some(a)) if a > 0.0 && a.is_finite() => {}
                (_, a) => return geo(format!("fracture cell {c} has invalid aperture {a:?}")),
            }
            if let Some(&bad) = parts.cell_nodes[c].iter().find(|&&v| v >= parts.points.len()) {
                return geo(format!("cell {c} references node {bad} of {}", parts.points.len()));
            }
        }
        let valid_cell = |c: usize| c < n;
        let mut seen = std::collections::BTreeSet::new();
        for (k, conn) in parts.connections.iter().enumerate() {
            let [i, j] = conn.cells;
            if !valid_cell(i) || !valid_cell(j) || i == j {
                return geo(format!("connection {k} references cells ({i}, {j}) of {n}"));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return geo(format!("connection {k} duplicates the pair ({i}, {j})"));
            }
            if !(conn.area >= 0.0) || !(conn.dist[0] > 0.0) || !(conn.dist[1] > 0.0) {
                return geo(format!("connection {k} has invalid geometry"));
            }
        }
        for (k, junction) in parts.junctions.iter().enumerate() {
            if junction.branches.len() < 2 {
                return geo(format!("junction {k} has fewer than two branches"));
            }
            for b in &junction.branches {
                if !valid_cell(b.cell) || !(b.dist > 0.0) || !(b.area >= 0.0) {
                    return geo(format!("junction {k} has an invalid branch"));
                }
            }
        }
        for (k, face) in parts.boundary.iter().enumerate() {
            if !valid_cell(face.cell) || !(face.dist > 0.0) || !(face.area >= 0.0) {
                return geo(format!("boundary face {k} is invalid"));
            }
        }

        let mut links = Vec::with_capacity(parts.connections.len());
        for (k, conn) in parts.connections.iter().enumerate() {
            links.push(Link { cells: conn.cells, source: LinkSource::Connection(k) });
        }
        for (k, junction) in parts.junctions.iter().enumerate() {
            for a in 0..junction.branches.len() {
                for b in a + 1..junction.branches.len() {
                    links.push(Link {
                        cells: [junction.branches[a].cell, junction.branches[b].cell],
                        source: LinkSource::Junction { junction: k, branches: [a, b] },
                    });
                }
            }
        }

        let mut degree = vec![0usize; n + 1];
        for l in &links {
            degree[l.cells[0] + 1] += 1;
            degree[l.cells[1] + 1] += 1;
        }
        for c in 0..n {
            degree[c + 1] += degree[c];
        }
        let adj_offsets = degree.clone();
        let mut next = degree;
        let mut adj = vec![(0, 0); adj_offsets[n]];
        for (k, l) in links.iter().enumerate() {
            let [i, j] = l.cells;
            adj[next[i]] = (j, k);
            next[i] += 1;
            adj[next[j]] = (i, k);
            next[j] += 1;
        }

        let grid = Self { parts, links, adj_offsets, adj };
        let comps = grid.components(|_| true);
        if comps.1 != 1 {
            return geo(format!("grid connectivity graph has {} components", comps.1));
        }
        Ok(grid)
    }

    pub fn parts(&self) -> &GridParts {
        &self.parts
    }

    pub fn cell_count(&self) -> usize {
        self.parts.kinds.len()
    }

    pub fn kind(&self, c: usize) -> CellKind {
        self.parts.kinds[c]
    }

    pub fn kinds(&self) -> &[CellKind] {
        &self.parts.kinds
    }

    pub fn center(&self, c: usize) -> Point {
        self.parts.centers[c]
    }

    pub fn centers(&self) -> &[Point] {
        &self.parts.centers
    }

    pub fn measure(&self, c: usize) -> f64 {
        self.parts.measures[c]
    }

    pub fn measures(&self) -> &[f64] {
        &self.parts.measures
    }

    pub fn aperture(&self, c: usize) -> Option<f64> {
        self.parts.apertures[c]
    }

    pub fn connections(&self) -> &[Connection] {
        &self.parts.connections
    }

    pub fn junctions(&self) -> &[Junction] {
        &self.parts.junctions
    }

    pub fn boundary(&self) -> &[BoundaryFace] {
        &self.parts.boundary
    }

    pub fn points(&self) -> &[Point] {
        &self.parts.points
    }

    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.parts.cell_nodes[c]
    }

    pub fn is_approximate(&self) -> bool {
        self.parts.approximate
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// `(neighbour, link index)` pairs of cell `c`.
    pub fn neighbors(&self, c: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_offsets[c]..self.adj_offsets[c + 1]]
    }

    pub fn fracture_cell_count(&self) -> usize {
        self.parts.kinds.iter().filter(|k| k.is_fracture()).count()
    }

    /// Per-link transmissibility for a per-cell coefficient (`K/μ` for flow,
    /// conductivity for heat). Faces combine the two half transmissibilities
    /// harmonically; junction pairs use `α_a α_b / Σ α`.
    pub fn transmissibilities(&self, coeff: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(coeff.len(), self.cell_count());
        let junction_alphas: Vec<Vec<f64>> = self
            .parts
            .junctions
            .iter()
            .map(|j| {
                j.branches
                    .iter()
                    .map(|b| half_transmissibility(b.area, coeff[b.cell], b.dist))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        self.links
            .iter()
            .map(|link| match link.source {
                LinkSource::Connection(k) => {
                    let conn = &self.parts.connections[k];
                    let a = conn.half_transmissibility(0, coeff[conn.cells[0]])?;
                    let b = conn.half_transmissibility(1, coeff[conn.cells[1]])?;
                    Ok(harmonic(a, b))
                }
                LinkSource::Junction { junction, branches: [a, b] } => {
                    let alphas = &junction_alphas[junction];
                    let total: f64 = alphas.iter().sum();
                    Ok(if total > 0.0 { alphas[a] * alphas[b] / total } else { 0.0 })
                }
            })
            .collect()
    }

    /// Graph Laplacian `Σ_links T (e_i - e_j)(e_i - e_j)ᵀ`.
    pub fn laplacian(&self, trans: &[f64]) -> SparseMatrix {
        assert_eq!(trans.len(), self.links.len());
        let n = self.cell_count();
        let mut t = Vec::with_capacity(4 * self.links.len() + n);
        for c in 0..n {
            t.push((c, c, 0.0));
        }
        for (l, &tr) in self.links.iter().zip(trans) {
            let [i, j] = l.cells;
            t.push((i, i, tr));
            t.push((j, j, tr));
            t.push((i, j, -tr));
            t.push((j, i, -tr));
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    /// Point where the flux of `link` crosses between its cells.
    pub fn link_point(&self, link: usize) -> Point {
        match self.links[link].source {
            LinkSource::Junction { junction, .. } => self.parts.junctions[junction].point,
            LinkSource::Connection(k) => {
                let conn = &self.parts.connections[k];
                let [i, j] = conn.cells;
                if self.kind(i).is_fracture() && self.kind(j).is_fracture() {
                    let shared = self.cell_nodes(i).iter().find(|v| self.cell_nodes(j).contains(v));
                    if let Some(&v) = shared {
                        return self.parts.points[v];
                    }
                }
                let c = self.center(i);
                [c[0] + conn.dist[0] * conn.normal[0], c[1] + conn.dist[0] * conn.normal[1]]
            }
        }
    }

    /// Connected components over links for which `allow(link)` holds.
    /// Returns per-cell component ids (numbered by lowest cell) and the count.
    pub fn components(&self, allow: impl Fn(usize) -> bool) -> (Vec<usize>, usize) {
        let n = self.cell_count();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(c) = stack.pop() {
                for &(nb, link) in self.neighbors(c) {
                    if comp[nb] == usize::MAX && allow(link) {
                        comp[nb] = count;
                        stack.push(nb);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// Fracture geometry as segments (a retained intersection cell is a
    /// degenerate segment at its node).
    pub fn fracture_segments(&self) -> Vec<(Point, Point)> {
        (0..self.cell_count())
            .filter(|&c| self.kind(c).is_fracture())
            .map(|c| {
                let nodes = self.cell_nodes(c);
                match nodes {
                    [a, b, ..] => (self.parts.points[*a], self.parts.points[*b]),
                    [a] => (self.parts.points[*a], self.parts.points[*a]),
                    [] => (self.center(c), self.center(c)),
                }
            })
            .collect()
    }

    /// Distance from every cell centre to the nearest fracture (0 on
    /// fracture cells).
    pub fn distance_to_fracture(&self) -> Result<Vec<f64>> {
        let segments = self.fracture_segments();
        if segments.is_empty() {
            return Err(Error::InvalidInput("distance to fracture is undefined without fractures".into()));
        }
        Ok((0..self.cell_count())
            .into_par_iter()
            .map(|c| {
                if self.kind(c).is_fracture() {
                    return 0.0;
                }
                let p = self.center(c);
                segments.iter().fold(f64::INFINITY, |m, &(a, b)| m.min(point_segment_distance(p, a, b)))
            })
            .collect())
    }

    /// Cells that host a point source at `p`, with equal weights. A point on
    /// the fracture network is shared by every fracture cell passing through
    /// it (or owned by a retained intersection cell); otherwise the matrix
    /// cell containing it is used.
    pub fn locate_point(&self, p: Point) -> Vec<(usize, f64)> {
        let scale = self.parts.points.iter().fold(1.0f64, |m, q| m.max(q[0].abs()).max(q[1].abs()));
        let tol = 1e-9 * scale;
        let mut on_fracture: Vec<usize> = Vec::new();
        for c in 0..self.cell_count() {
            match self.kind(c) {
                CellKind::Intersection if distance(self.center(c), p) <= tol => return vec![(c, 1.0)],
                CellKind::Fracture => {
                    let nodes = self.cell_nodes(c);
                    if nodes.len() >= 2 {
                        let (a, b) = (self.parts.points[nodes[0]], self.parts.points[nodes[1]]);
                        if point_segment_distance(p, a, b) <= tol {
                            on_fracture.push(c);
                        }
                    }
                }
                _ => {}
            }
        }
        if !on_fracture.is_empty() {
            let w = 1.0 / on_fracture.len() as f64;
            return on_fracture.into_iter().map(|c| (c, w)).collect();
        }
        for c in 0..self.cell_count() {
            if self.kind(c) == CellKind::Matrix && self.polygon_contains(c, p, tol) {
                return vec![(c, 1.0)];
            }
        }
        let nearest = (0..self.cell_count())
            .min_by(|&a, &b| distance(self.center(a), p).total_cmp(&distance(self.center(b), p)))
            .unwrap();
        vec![(nearest, 1.0)]
    }

    fn polygon_contains(&self, c: usize, p: Point, tol: f64) -> bool {
        let nodes = self.cell_nodes(c);
        if nodes.len() < 3 {
            return false;
        }
        let pts: Vec<Point> = nodes.iter().map(|&v| self.parts.points[v]).collect();
        let mut sign = 0.0f64;
        for k in 0..pts.len() {
            let a = pts[k];
            let b = pts[(k + 1) % pts.len()];
            let len = distance(a, b).max(f64::MIN_POSITIVE);
            let cross = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / len;
            if cross.abs() <= tol {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        true
    }

    /// Fracture cells with a boundary face, i.e. where fractures exit the
    /// domain.
    pub fn fracture_outlets(&self) -> Vec<usize> {
        let mut cells: Vec<usize> =
            self.parts.boundary.iter().filter(|f| self.kind(f.cell).is_fracture()).map(|f| f.cell).collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b / (a + b)
    }
}
