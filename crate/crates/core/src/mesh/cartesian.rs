//! Cartesian DFM grids: fractures live on the edges of a uniform grid.

use std::collections::BTreeMap;

use super::{BoundaryFace, CellKind, Connection, FineGrid, FractureNetwork, GridParts, Junction, JunctionBranch};
use crate::geometry::{point_segment_distance, Point, Rect};
use crate::{Error, Result};

/// Snapping tolerance for fracture endpoints, in metres.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntersectionMode {
    /// Eliminate the intersection unknown; branches couple pairwise.
    #[default]
    StarDelta,
    /// Keep a small intersection cell where three or more branches meet.
    Retained,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianSpec {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub intersections: IntersectionMode,
}

impl CartesianSpec {
    pub fn new(domain: Rect, nx: usize, ny: usize) -> Self {
        Self { domain, nx, ny, intersections: IntersectionMode::StarDelta }
    }

    pub fn with_intersections(mut self, mode: IntersectionMode) -> Self {
        self.intersections = mode;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidInput(format!("grid size {}x{} is empty", self.nx, self.ny)));
        }
        if !(self.domain.width() > 0.0 && self.domain.height() > 0.0) {
            return Err(Error::InvalidInput("domain rectangle has no area".into()));
        }
        Ok(())
    }
}

/// Edge and node bookkeeping for an `nx` by `ny` grid. Horizontal edges are
/// numbered first (`j * nx + i`), then vertical ones.
struct Lattice {
    spec: CartesianSpec,
    hx: f64,
    hy: f64,
}

impl Lattice {
    fn new(spec: CartesianSpec) -> Self {
        let hx = spec.domain.width() / spec.nx as f64;
        let hy = spec.domain.height() / spec.ny as f64;
        Self { spec, hx, hy }
    }

    fn nx(&self) -> usize {
        self.spec.nx
    }

    fn ny(&self) -> usize {
        self.spec.ny
    }

    fn h_edges(&self) -> usize {
        self.nx() * (self.ny() + 1)
    }

    fn edge_count(&self) -> usize {
        self.h_edges() + (self.nx() + 1) * self.ny()
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx() + 1) + i
    }

    fn node_point(&self, i: usize, j: usize) -> Point {
        let min = self.spec.domain.min;
        [min[0] + i as f64 * self.hx, min[1] + j as f64 * self.hy]
    }

    fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    /// Edge between two lattice nodes that differ by one step.
    fn edge_between(&self, (i0, j0): (usize, usize), (i1, j1): (usize, usize)) -> usize {
        if j0 == j1 {
            j0 * self.nx() + i0.min(i1)
        } else {
            self.h_edges() + j0.min(j1) * (self.nx() + 1) + i0
        }
    }

    /// End nodes (as lattice coordinates) of an edge.
    fn edge_nodes(&self, e: usize) -> [(usize, usize); 2] {
        if e < self.h_edges() {
            let (i, j) = (e % self.nx(), e / self.nx());
            [(i, j), (i + 1, j)]
        } else {
            let v = e - self.h_edges();
            let (i, j) = (v % (self.nx() + 1), v / (self.nx() + 1));
            [(i, j), (i, j + 1)]
        }
    }

    fn is_horizontal(&self, e: usize) -> bool {
        e < self.h_edges()
    }

    fn edge_length(&self, e: usize) -> f64 {
        if self.is_horizontal(e) {
            self.hx
        } else {
            self.hy
        }
    }

    /// Matrix cells on the low and high side of an edge, with the outward
    /// tag when one side is missing.
    fn edge_sides(&self, e: usize) -> (Option<usize>, Option<usize>, Point, &'static str, &'static str) {
        let [(i, j), _] = self.edge_nodes(e);
        if self.is_horizontal(e) {
            let low = (j > 0).then(|| self.cell(i, j - 1));
            let high = (j < self.ny()).then(|| self.cell(i, j));
            (low, high, [0.0, 1.0], "ymin", "ymax")
        } else {
            let low = (i > 0).then(|| self.cell(i - 1, j));
            let high = (i < self.nx()).then(|| self.cell(i, j));
            (low, high, [1.0, 0.0], "xmin", "xmax")
        }
    }

    /// Lattice index of a coordinate, if it lies on a grid line.
    fn snap(&self, v: f64, origin: f64, h: f64, n: usize) -> Option<usize> {
        let k = ((v - origin) / h).round();
        if k < 0.0 || k > n as f64 {
            return None;
        }
        ((origin + k * h - v).abs() <= SNAP_TOL).then_some(k as usize)
    }

    fn nearest(&self, p: Point) -> (usize, usize) {
        let min = self.spec.domain.min;
        let i = ((p[0] - min[0]) / self.hx).round().clamp(0.0, self.nx() as f64) as usize;
        let j = ((p[1] - min[1]) / self.hy).round().clamp(0.0, self.ny() as f64) as usize;
        (i, j)
    }
}

/// Builds a DFM grid on an `nx` by `ny` Cartesian grid. Every segment must be
/// axis aligned with endpoints on grid nodes.
pub fn build_cartesian_dfm(spec: &CartesianSpec, network: &FractureNetwork) -> Result<FineGrid> {
    spec.validate()?;
    let lat = Lattice::new(*spec);
    network.check_inside(&spec.domain, SNAP_TOL)?;
    let min = spec.domain.min;
    let mut edges: BTreeMap<usize, f64> = BTreeMap::new();
    for (index, s) in network.segments().iter().enumerate() {
        let reject = |reason: &str| Error::Segment { index, reason: reason.into() };
        let vertical = (s.a[0] - s.b[0]).abs() <= SNAP_TOL;
        let horizontal = (s.a[1] - s.b[1]).abs() <= SNAP_TOL;
        let (ia, ja, ib, jb) = match (horizontal, vertical) {
            (true, false) | (false, true) => {
                let snap_x = |x| lat.snap(x, min[0], lat.hx, lat.nx());
                let snap_y = |y| lat.snap(y, min[1], lat.hy, lat.ny());
                match (snap_x(s.a[0]), snap_y(s.a[1]), snap_x(s.b[0]), snap_y(s.b[1])) {
                    (Some(ia), Some(ja), Some(ib), Some(jb)) => (ia, ja, ib, jb),
                    _ => return Err(reject("segment is off the grid lines")),
                }
            }
            _ => return Err(reject("segment is not axis aligned")),
        };
        if (ia, ja) == (ib, jb) {
            return Err(reject("segment is shorter than one grid edge"));
        }
        for e in walk_straight(&lat, (ia, ja), (ib, jb)) {
            let slot = edges.entry(e).or_insert(0.0);
            *slot = slot.max(s.aperture);
        }
    }
    assemble(&lat, &edges, false)
}

/// Maps arbitrary segments onto grid edges: each segment is clipped to the
/// domain, its endpoints are snapped to the nearest nodes, and the nodes are
/// joined by the staircase path that stays closest to the segment. The result
/// is flagged approximate.
pub fn rasterize_dfm(spec: &CartesianSpec, network: &FractureNetwork) -> Result<FineGrid> {
    spec.validate()?;
    let lat = Lattice::new(*spec);
    let mut edges: BTreeMap<usize, f64> = BTreeMap::new();
    for (index, s) in network.segments().iter().enumerate() {
        let Some((a, b)) = spec.domain.clip_segment(s.a, s.b) else {
            log::warn!("fracture segment {index} lies outside the domain; skipped");
            continue;
        };
        let (start, end) = (lat.nearest(a), lat.nearest(b));
        if start == end {
            log::warn!("fracture segment {index} is shorter than a grid cell; skipped");
            continue;
        }
        let mut cur = start;
        while cur != end {
            let step = |c: usize, t: usize| match c.cmp(&t) {
                std::cmp::Ordering::Less => Some(c + 1),
                std::cmp::Ordering::Greater => Some(c - 1),
                std::cmp::Ordering::Equal => None,
            };
            let mut options = Vec::with_capacity(2);
            if let Some(i) = step(cur.0, end.0) {
                options.push((i, cur.1));
            }
            if let Some(j) = step(cur.1, end.1) {
                options.push((cur.0, j));
            }
            let next = options
                .into_iter()
                .map(|n| (point_segment_distance(lat.node_point(n.0, n.1), a, b), n))
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .map(|(_, n)| n)
                .unwrap();
            let slot = edges.entry(lat.edge_between(cur, next)).or_insert(0.0);
            *slot = slot.max(s.aperture);
            cur = next;
        }
    }
    assemble(&lat, &edges, true)
}

fn walk_straight(lat: &Lattice, a: (usize, usize), b: (usize, usize)) -> Vec<usize> {
    let mut out = Vec::new();
    if a.1 == b.1 {
        for i in a.0.min(b.0)..a.0.max(b.0) {
            out.push(lat.edge_between((i, a.1), (i + 1, a.1)));
        }
    } else {
        for j in a.1.min(b.1)..a.1.max(b.1) {
            out.push(lat.edge_between((a.0, j), (a.0, j + 1)));
        }
    }
    out
}

fn unit(from: Point, to: Point) -> Point {
    let d = [to[0] - from[0], to[1] - from[1]];
    let n = d[0].hypot(d[1]);
    [d[0] / n, d[1] / n]
}

fn assemble(lat: &Lattice, edges: &BTreeMap<usize, f64>, approximate: bool) -> Result<FineGrid> {
    let (nx, ny) = (lat.nx(), lat.ny());
    let nm = nx * ny;
    let mut p = GridParts { approximate, ..Default::default() };

    for j in 0..=ny {
        for i in 0..=nx {
            p.points.push(lat.node_point(i, j));
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let lo = lat.node_point(i, j);
            p.kinds.push(CellKind::Matrix);
            p.centers.push([lo[0] + 0.5 * lat.hx, lo[1] + 0.5 * lat.hy]);
            p.measures.push(lat.hx * lat.hy);
            p.apertures.push(None);
            p.cell_nodes.push(vec![lat.node(i, j), lat.node(i + 1, j), lat.node(i + 1, j + 1), lat.node(i, j + 1)]);
        }
    }

    let mut frac_of_edge: BTreeMap<usize, usize> = BTreeMap::new();
    for (&e, &a) in edges {
        let [n0, n1] = lat.edge_nodes(e);
        let (p0, p1) = (lat.node_point(n0.0, n0.1), lat.node_point(n1.0, n1.1));
        frac_of_edge.insert(e, p.kinds.len());
        p.kinds.push(CellKind::Fracture);
        p.centers.push([0.5 * (p0[0] + p1[0]), 0.5 * (p0[1] + p1[1])]);
        p.measures.push(lat.edge_length(e) * a);
        p.apertures.push(Some(a));
        p.cell_nodes.push(vec![lat.node(n0.0, n0.1), lat.node(n1.0, n1.1)]);
    }

    for e in 0..lat.edge_count() {
        let len = lat.edge_length(e);
        let h_normal = if lat.is_horizontal(e) { lat.hy } else { lat.hx };
        let (low, high, n, low_tag, high_tag) = lat.edge_sides(e);
        let neg = [-n[0], -n[1]];
        match frac_of_edge.get(&e) {
            None => match (low, high) {
                (Some(l), Some(h)) => p.connections.push(Connection {
                    cells: [l, h],
                    area: len,
                    dist: [0.5 * h_normal, 0.5 * h_normal],
                    normal: n,
                }),
                (Some(l), None) => p.boundary.push(BoundaryFace {
                    cell: l,
                    area: len,
                    dist: 0.5 * h_normal,
                    normal: n,
                    tag: high_tag.into(),
                }),
                (None, Some(h)) => p.boundary.push(BoundaryFace {
                    cell: h,
                    area: len,
                    dist: 0.5 * h_normal,
                    normal: neg,
                    tag: low_tag.into(),
                }),
                (None, None) => unreachable!("every edge touches a cell"),
            },
            Some(&f) => {
                let half_a = 0.5 * p.apertures[f].unwrap();
                if let Some(l) = low {
                    p.connections.push(Connection {
                        cells: [l, f],
                        area: len,
                        dist: [0.5 * h_normal, half_a],
                        normal: n,
                    });
                } else {
                    p.boundary.push(BoundaryFace {
                        cell: f,
                        area: len,
                        dist: half_a,
                        normal: neg,
                        tag: low_tag.into(),
                    });
                }
                if let Some(h) = high {
                    p.connections.push(Connection {
                        cells: [h, f],
                        area: len,
                        dist: [0.5 * h_normal, half_a],
                        normal: neg,
                    });
                } else {
                    p.boundary.push(BoundaryFace { cell: f, area: len, dist: half_a, normal: n, tag: high_tag.into() });
                }
            }
        }
    }

    // fracture cells meeting at each node
    let mut at_node: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &f in frac_of_edge.values() {
        for &v in &p.cell_nodes[f] {
            at_node.entry(v).or_default().push(f);
        }
    }
    let dom = lat.spec.domain;
    let mut retained: Vec<(usize, Vec<usize>)> = Vec::new();
    for (&v, cells) in &at_node {
        let q = p.points[v];
        let half_len = |f: usize| 0.5 * p.measures[f] / p.apertures[f].unwrap();
        match cells.as_slice() {
            [f] => {
                let d = unit(p.centers[*f], q);
                let tag = if d[0] > 0.5 && q[0] == dom.max[0] {
                    "xmax"
                } else if d[0] < -0.5 && q[0] == dom.min[0] {
                    "xmin"
                } else if d[1] > 0.5 && q[1] == dom.max[1] {
                    "ymax"
                } else if d[1] < -0.5 && q[1] == dom.min[1] {
                    "ymin"
                } else {
                    continue;
                };
                p.boundary.push(BoundaryFace {
                    cell: *f,
                    area: p.apertures[*f].unwrap(),
                    dist: half_len(*f),
                    normal: d,
                    tag: tag.into(),
                });
            }
            [f, g] if p.apertures[*f] == p.apertures[*g] => p.connections.push(Connection {
                cells: [*f, *g],
                area: p.apertures[*f].unwrap(),
                dist: [half_len(*f), half_len(*g)],
                normal: unit(p.centers[*f], p.centers[*g]),
            }),
            many if many.len() >= 3 && lat.spec.intersections == IntersectionMode::Retained => {
                retained.push((v, many.to_vec()));
            }
            many => p.junctions.push(Junction {
                point: q,
                branches: many
                    .iter()
                    .map(|&f| JunctionBranch { cell: f, area: p.apertures[f].unwrap(), dist: half_len(f) })
                    .collect(),
            }),
        }
    }
    for (v, cells) in retained {
        let q = p.points[v];
        let a_max = cells.iter().map(|&f| p.apertures[f].unwrap()).fold(0.0, f64::max);
        let id = p.kinds.len();
        p.kinds.push(CellKind::Intersection);
        p.centers.push(q);
        p.measures.push(a_max * a_max);
        p.apertures.push(Some(a_max));
        p.cell_nodes.push(vec![v]);
        for f in cells {
            let a = p.apertures[f].unwrap();
            p.connections.push(Connection {
                cells: [f, id],
                area: a,
                dist: [0.5 * p.measures[f] / a, 0.5 * a_max],
                normal: unit(p.centers[f], q),
            });
        }
    }
    debug_assert!(p.kinds[..nm].iter().all(|k| *k == CellKind::Matrix));
    FineGrid::new(p)
}
