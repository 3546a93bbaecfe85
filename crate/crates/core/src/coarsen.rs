//! Coarse partitions of a fine grid.
//!
//! The pipeline bins a time-of-flight indicator and a distance-to-fracture
//! indicator, intersects the resulting partitions, separates fracture from
//! matrix cells and finally splits every coarse cell into connected pieces.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use crate::flow::FluxField;
use crate::geometry::{Point, Rect};
use crate::mesh::FineGrid;
use crate::{Error, Result};

/// Surjective map from fine cells onto `0..count`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
}

/// Fine links between two coarse cells `k < l`, with orientation `+1` when
/// the link points from `k` to `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseInterface {
    pub cells: [usize; 2],
    pub links: Vec<(usize, f64)>,
}

impl Partition {
    /// Relabels arbitrary labels compactly in order of first appearance.
    pub fn new(labels: &[usize]) -> Self {
        let mut map = BTreeMap::new();
        let labels: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { count: map.len(), labels }
    }

    /// Like [`Partition::new`] for arbitrary hashable keys.
    pub fn from_keys<K: Ord + Clone>(keys: &[K]) -> Self {
        let mut map = BTreeMap::new();
        let labels: Vec<usize> = keys
            .iter()
            .map(|k| {
                let next = map.len();
                *map.entry(k.clone()).or_insert(next)
            })
            .collect();
        Self { count: map.len(), labels }
    }

    pub fn identity(n: usize) -> Self {
        Self { labels: (0..n).collect(), count: n }
    }

    pub fn single(n: usize) -> Self {
        Self { labels: vec![0; n], count: usize::from(n > 0) }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, fine: usize) -> usize {
        self.labels[fine]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn fine_count(&self) -> usize {
        self.labels.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.count];
        for (f, &c) in self.labels.iter().enumerate() {
            m[c].push(f);
        }
        m
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &c in &self.labels {
            s[c] += 1;
        }
        s
    }

    /// Whether each coarse cell holds fracture cells (meaningful after
    /// [`split_hybrid`]).
    pub fn fracture_flags(&self, grid: &FineGrid) -> Vec<bool> {
        let mut flags = vec![false; self.count];
        for (f, &c) in self.labels.iter().enumerate() {
            flags[c] |= grid.kind(f).is_fracture();
        }
        flags
    }

    /// Coarse interfaces sorted by cell pair, links in increasing order.
    pub fn interfaces(&self, grid: &FineGrid) -> Vec<CoarseInterface> {
        let mut map: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for (k, l) in grid.links().iter().enumerate() {
            let (a, b) = (self.labels[l.cells[0]], self.labels[l.cells[1]]);
            if a != b {
                let sign = if a < b { 1.0 } else { -1.0 };
                map.entry((a.min(b), a.max(b))).or_default().push((k, sign));
            }
        }
        map.into_iter().map(|((a, b), links)| CoarseInterface { cells: [a, b], links }).collect()
    }

    /// Checks connectedness, purity and surjectivity.
    pub fn validate(&self, grid: &FineGrid) -> Result<()> {
        if self.labels.len() != grid.cell_count() {
            return Err(Error::InvalidInput("partition length differs from the cell count".into()));
        }
        if self.sizes().contains(&0) {
            return Err(Error::InvalidInput("partition has an empty coarse cell".into()));
        }
        let mut kind = vec![None; self.count];
        for (f, &c) in self.labels.iter().enumerate() {
            let frac = grid.kind(f).is_fracture();
            if *kind[c].get_or_insert(frac) != frac {
                return Err(Error::InvalidInput(format!("coarse cell {c} mixes fracture and matrix cells")));
            }
        }
        let (_, pieces) = grid.components(|l| {
            let [i, j] = grid.links()[l].cells;
            self.labels[i] == self.labels[j]
        });
        if pieces != self.count {
            return Err(Error::InvalidInput("a coarse cell is not connected".into()));
        }
        Ok(())
    }

    /// One label per line.
    pub fn write_labels(&self, mut w: impl Write) -> Result<()> {
        for l in &self.labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    pub fn read_labels(r: impl BufRead) -> Result<Self> {
        let mut labels = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            labels.push(t.parse().map_err(|e| Error::Parse { line: k + 1, message: format!("{e}") })?);
        }
        Ok(Self::new(&labels))
    }
}

/// Forward time of flight from injectors and inflow boundaries.
///
/// `τ_i = (φ_i V_i + Σ_in F τ_up) / Σ_in F` in upwind order, `τ = 0` in
/// injector cells. Cells never reached by the flow get 10 times the largest
/// swept value.
pub fn compute_tof(grid: &FineGrid, flux: &FluxField, porosity: &[f64]) -> Result<Vec<f64>> {
    flux.check_grid(grid)?;
    let n = grid.cell_count();
    // fluxes from a pressure field point down the pressure gradient, so the
    // graph of nonzero fluxes is acyclic; no threshold is applied
    let eps = 0.0;
    let mut inflow = vec![0.0; n];
    let mut seeded = vec![false; n];
    for (c, &q) in flux.sources.iter().enumerate() {
        if q > eps {
            seeded[c] = true;
        }
    }
    for (face, &f) in grid.boundary().iter().zip(&flux.boundary) {
        if f < -eps {
            inflow[face.cell] -= f;
            seeded[face.cell] = true;
        }
    }
    if !seeded.iter().any(|&s| s) {
        return Err(Error::InvalidInput("time of flight needs at least one inflow".into()));
    }
    // directed edges along positive flux
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (l, &f) in grid.links().iter().zip(&flux.links) {
        if f.abs() <= eps {
            continue;
        }
        let (up, down) = if f > 0.0 { (l.cells[0], l.cells[1]) } else { (l.cells[1], l.cells[0]) };
        out[up].push((down, f.abs()));
        indeg[down] += 1;
    }
    let mut weighted = vec![0.0; n];
    let mut reached = seeded.clone();
    let mut tau = vec![0.0; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&c| indeg[c] == 0).collect();
    let mut done = 0;
    while let Some(c) = queue.pop_front() {
        done += 1;
        tau[c] = if flux.sources[c] > eps {
            0.0
        } else if reached[c] && inflow[c] > 0.0 {
            (porosity[c] * grid.measure(c) + weighted[c]) / inflow[c]
        } else {
            f64::NAN
        };
        for &(d, f) in &out[c] {
            if reached[c] {
                reached[d] = true;
                inflow[d] += f;
                weighted[d] += f * tau[c];
            }
            indeg[d] -= 1;
            if indeg[d] == 0 {
                queue.push_back(d);
            }
        }
    }
    if done < n {
        let cell = (0..n).find(|&c| indeg[c] > 0).unwrap();
        return Err(Error::CyclicFlux { cell });
    }
    let max_swept = tau.iter().filter(|t| t.is_finite()).fold(0.0f64, |m, t| m.max(*t));
    let cap = if max_swept > 0.0 { 10.0 * max_swept } else { 1.0 };
    for t in tau.iter_mut() {
        if !t.is_finite() {
            *t = cap;
        }
    }
    Ok(tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinScale {
    #[default]
    Log10,
    Linear,
}

/// Equal-width bins of the indicator, each split into connected pieces.
pub fn indicator_partition(grid: &FineGrid, field: &[f64], bins: usize, scale: BinScale) -> Result<Partition> {
    if bins == 0 {
        return Err(Error::InvalidInput("number of bins must be at least one".into()));
    }
    if field.len() != grid.cell_count() || field.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("indicator must be finite and nonnegative on every cell".into()));
    }
    let min_pos = field.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let x: Vec<f64> = match scale {
        BinScale::Linear => field.to_vec(),
        BinScale::Log10 => {
            let floor = if min_pos.is_finite() { min_pos } else { 1.0 };
            field.iter().map(|v| v.max(floor).log10()).collect()
        }
    };
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bin: Vec<usize> =
        x.iter()
            .map(|v| {
                if hi > lo {
                    (((v - lo) / (hi - lo)) * bins as f64).floor().min(bins as f64 - 1.0) as usize
                } else {
                    0
                }
            })
            .collect();
    Ok(enforce_connected(&Partition::new(&bin), grid))
}

/// Bins by cumulative widths `w_0, w_0 + w_1, ...`; the last bin is open.
pub fn distance_partition(grid: &FineGrid, distance: &[f64], widths: &[f64]) -> Result<Partition> {
    if widths.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidInput("distance bin widths must be positive".into()));
    }
    if distance.len() != grid.cell_count() {
        return Err(Error::InvalidInput("distance field length differs from the cell count".into()));
    }
    let mut edges = Vec::with_capacity(widths.len());
    let mut acc = 0.0;
    for w in widths {
        acc += w;
        edges.push(acc);
    }
    let bin: Vec<usize> = distance.iter().map(|d| edges.iter().position(|e| d < e).unwrap_or(edges.len())).collect();
    Ok(enforce_connected(&Partition::new(&bin), grid))
}

/// `first, first·ratio, first·ratio², ...` (`count` widths).
pub fn geometric_widths(first: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| first * ratio.powi(k as i32)).collect()
}

/// Axis-aligned bounding box of the grid points (cell centres if the grid
/// has no points).
pub fn bounding_box(grid: &FineGrid) -> Rect {
    let pts: &[Point] = if grid.points().is_empty() { grid.centers() } else { grid.points() };
    let mut r = Rect::new([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for d in 0..2 {
            r.min[d] = r.min[d].min(p[d]);
            r.max[d] = r.max[d].max(p[d]);
        }
    }
    r
}

/// Uniform `nx` by `ny` boxes over the grid's bounding box, split into
/// connected pieces.
pub fn box_partition(grid: &FineGrid, nx: usize, ny: usize) -> Result<Partition> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput("box counts must be positive".into()));
    }
    let bb = bounding_box(grid);
    let keys: Vec<(usize, usize)> = grid
        .centers()
        .iter()
        .map(|c| {
            let fx = ((c[0] - bb.min[0]) / bb.width() * nx as f64).floor().clamp(0.0, nx as f64 - 1.0);
            let fy = ((c[1] - bb.min[1]) / bb.height() * ny as f64).floor().clamp(0.0, ny as f64 - 1.0);
            (fy as usize, fx as usize)
        })
        .collect();
    Ok(enforce_connected(&Partition::from_keys(&keys), grid))
}

/// Non-empty intersections of two partitions, split into connected pieces.
pub fn intersect_partitions(grid: &FineGrid, a: &Partition, b: &Partition) -> Partition {
    let keys: Vec<(usize, usize)> = a.labels.iter().zip(&b.labels).map(|(x, y)| (*x, *y)).collect();
    enforce_connected(&Partition::from_keys(&keys), grid)
}

/// Separates fracture from matrix cells; fracture parts are further split
/// into connected pieces.
pub fn split_hybrid(p: &Partition, grid: &FineGrid) -> Partition {
    let keys: Vec<(usize, bool)> = (0..grid.cell_count()).map(|f| (p.labels[f], grid.kind(f).is_fracture())).collect();
    enforce_connected(&Partition::from_keys(&keys), grid)
}

/// Splits every coarse cell into its connected components (through fine
/// links only).
pub fn enforce_connected(p: &Partition, grid: &FineGrid) -> Partition {
    let (comp, count) = grid.components(|l| {
        let [i, j] = grid.links()[l].cells;
        p.labels[i] == p.labels[j]
    });
    debug_assert!(count >= p.count);
    Partition::new(&comp)
}

/// Merges coarse cells with fewer than `min_size` fine cells into the
/// like-kind neighbour sharing the most fine links.
pub fn merge_small(p: &Partition, grid: &FineGrid, min_size: usize) -> Partition {
    merge_below(p, grid, min_size, true)
}

fn merge_below(p: &Partition, grid: &FineGrid, min_size: usize, fractures: bool) -> Partition {
    let mut cur = p.clone();
    for _ in 0..64 {
        let sizes = cur.sizes();
        let frac = cur.fracture_flags(grid);
        let mut shared: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for iface in cur.interfaces(grid) {
            let [a, b] = iface.cells;
            shared.insert((a, b), iface.links.len());
            shared.insert((b, a), iface.links.len());
        }
        let mut target: Vec<usize> = (0..cur.count).collect();
        let mut changed = false;
        for k in 0..cur.count {
            if sizes[k] >= min_size || target[k] != k || (frac[k] && !fractures) {
                continue;
            }
            let best = shared
                .range((k, 0)..(k + 1, 0))
                .filter(|((_, l), _)| frac[*l] == frac[k] && target[*l] == *l)
                .max_by(|x, y| x.1.cmp(y.1).then(y.0 .1.cmp(&x.0 .1)))
                .map(|((_, l), _)| *l);
            if let Some(l) = best {
                target[k] = l;
                // the absorbing cell stays put for the rest of this pass
                target[l] = l;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let labels: Vec<usize> = cur.labels.iter().map(|&c| target[c]).collect();
        cur = Partition::new(&labels);
    }
    cur
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    pub fine_count: usize,
    pub coarse_count: usize,
    pub coarsening_factor: f64,
    pub matrix_cells: usize,
    pub fracture_cells: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// `(upper bound, count)` with power-of-two bounds.
    pub size_histogram: Vec<(usize, usize)>,
}

pub fn partition_stats(p: &Partition, grid: &FineGrid) -> PartitionStats {
    let sizes = p.sizes();
    let frac = p.fracture_flags(grid);
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &sizes {
        *hist.entry(s.next_power_of_two()).or_default() += 1;
    }
    PartitionStats {
        fine_count: p.fine_count(),
        coarse_count: p.count,
        coarsening_factor: coarsening_factor(p.fine_count(), p.count),
        matrix_cells: frac.iter().filter(|f| !**f).count(),
        fracture_cells: frac.iter().filter(|f| **f).count(),
        min_size: sizes.iter().copied().min().unwrap_or(0),
        max_size: sizes.iter().copied().max().unwrap_or(0),
        size_histogram: hist.into_iter().collect(),
    }
}

pub fn coarsening_factor(fine: usize, coarse: usize) -> f64 {
    fine as f64 / coarse as f64
}

/// Carries a partition to another grid covering the same domain: every
/// destination cell takes the label of the nearest source cell of the same
/// kind (matrix or fracture). The result is made pure and connected.
pub fn transfer_partition(src_grid: &FineGrid, src: &Partition, dst_grid: &FineGrid) -> Result<Partition> {
    let index = |frac: bool| {
        let cells: Vec<usize> =
            (0..src_grid.cell_count()).filter(|&c| src_grid.kind(c).is_fracture() == frac).collect();
        BucketIndex::new(src_grid.centers(), cells)
    };
    let (matrix, fracture) = (index(false), index(true));
    let mut labels = Vec::with_capacity(dst_grid.cell_count());
    for c in 0..dst_grid.cell_count() {
        let p = dst_grid.center(c);
        let idx = if dst_grid.kind(c).is_fracture() { &fracture } else { &matrix };
        let nearest = idx
            .nearest(src_grid.centers(), p)
            .or_else(|| if dst_grid.kind(c).is_fracture() { matrix.nearest(src_grid.centers(), p) } else { None })
            .ok_or_else(|| Error::InvalidInput("source grid has no cells of a required kind".into()))?;
        labels.push(src.labels[nearest]);
    }
    Ok(split_hybrid(&Partition::new(&labels), dst_grid))
}

/// Uniform bucket grid for nearest-centre queries.
struct BucketIndex {
    cells: Vec<usize>,
    bb: Rect,
    nb: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl BucketIndex {
    fn new(centers: &[Point], cells: Vec<usize>) -> Self {
        let mut bb = Rect::new([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &c in &cells {
            for d in 0..2 {
                bb.min[d] = bb.min[d].min(centers[c][d]);
                bb.max[d] = bb.max[d].max(centers[c][d]);
            }
        }
        let side = (cells.len() as f64).sqrt().ceil().max(1.0) as usize;
        let nb = [side, side];
        let mut idx = Self { cells, bb, nb, buckets: vec![Vec::new(); side * side] };
        for k in 0..idx.cells.len() {
            let (i, j) = idx.bucket_of(centers[idx.cells[k]]);
            idx.buckets[j * nb[0] + i].push(idx.cells[k]);
        }
        idx
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        let f = |d: usize| {
            let w = self.bb.max[d] - self.bb.min[d];
            if w > 0.0 {
                (((p[d] - self.bb.min[d]) / w) * self.nb[d] as f64).floor().clamp(0.0, self.nb[d] as f64 - 1.0) as usize
            } else {
                0
            }
        };
        (f(0), f(1))
    }

    fn nearest(&self, centers: &[Point], p: Point) -> Option<usize> {
        if self.cells.is_empty() {
            return None;
        }
        let (bi, bj) = self.bucket_of(p);
        let bw = [
            (self.bb.max[0] - self.bb.min[0]) / self.nb[0] as f64,
            (self.bb.max[1] - self.bb.min[1]) / self.nb[1] as f64,
        ];
        let mut best: Option<(f64, usize)> = None;
        let max_ring = self.nb[0].max(self.nb[1]);
        for ring in 0..=max_ring {
            let (i0, i1) = (bi.saturating_sub(ring), (bi + ring).min(self.nb[0] - 1));
            let (j0, j1) = (bj.saturating_sub(ring), (bj + ring).min(self.nb[1] - 1));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    if i != i0 && i != i1 && j != j0 && j != j1 && ring > 0 {
                        continue;
                    }
                    for &c in &self.buckets[j * self.nb[0] + i] {
                        let d = crate::geometry::distance(centers[c], p);
                        if best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                            best = Some((d, c));
                        }
                    }
                }
            }
            // every unvisited bucket lies at least `ring * width` away
            if let Some((bd, _)) = best {
                if bd < ring as f64 * bw[0].min(bw[1]) {
                    break;
                }
            }
        }
        best.map(|(_, c)| c)
    }
}

/// Indicator choices for [`coarsen`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsenParams {
    /// Number of time-of-flight bins; `None` skips the flow indicator.
    pub tof_bins: Option<usize>,
    pub tof_scale: BinScale,
    /// Distance bin widths in metres; `None` skips the distance indicator.
    pub distance_widths: Option<Vec<f64>>,
    /// Uniform box resolution `(nx, ny)`.
    pub boxes: Option<(usize, usize)>,
    /// Coarse cells with fewer fine cells are merged; 0 disables merging.
    pub merge_below: usize,
    /// Keep every fracture cell as its own coarse cell.
    pub fine_fractures: bool,
}

impl Default for CoarsenParams {
    fn default() -> Self {
        Self {
            tof_bins: Some(6),
            tof_scale: BinScale::Log10,
            distance_widths: None,
            boxes: None,
            merge_below: 4,
            fine_fractures: false,
        }
    }
}

/// Indicator partitions, intersected, then split into pure connected cells
/// and cleaned of tiny cells.
pub fn coarsen(
    grid: &FineGrid,
    flux: Option<&FluxField>,
    porosity: &[f64],
    params: &CoarsenParams,
) -> Result<Partition> {
    let mut p = Partition::single(grid.cell_count());
    if let Some(bins) = params.tof_bins {
        let flux = flux.ok_or_else(|| Error::InvalidInput("time-of-flight binning needs a flux field".into()))?;
        let tof = compute_tof(grid, flux, porosity)?;
        p = intersect_partitions(grid, &p, &indicator_partition(grid, &tof, bins, params.tof_scale)?);
    }
    if let Some(widths) = &params.distance_widths {
        let d = grid.distance_to_fracture()?;
        p = intersect_partitions(grid, &p, &distance_partition(grid, &d, widths)?);
    }
    if let Some((nx, ny)) = params.boxes {
        p = intersect_partitions(grid, &p, &box_partition(grid, nx, ny)?);
    }
    if params.fine_fractures {
        let keys: Vec<usize> =
            (0..grid.cell_count()).map(|c| if grid.kind(c).is_fracture() { c + 1 } else { 0 }).collect();
        p = intersect_partitions(grid, &p, &Partition::from_keys(&keys));
    }
    p = split_hybrid(&p, grid);
    if params.merge_below > 1 {
        p = merge_below(&p, grid, params.merge_below, !params.fine_fractures);
    }
    Ok(enforce_connected(&p, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{solve_flow, BoundaryConditions, FlowProps, WellControl, WellLocation, WellSet};
    use crate::mesh::{build_cartesian_dfm, CartesianSpec, FractureNetwork, GridParts, Segment};

    fn square(n: usize, net: &FractureNetwork) -> FineGrid {
        build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(n as f64, n as f64), n, n), net).unwrap()
    }

    fn same_up_to_relabel(a: &Partition, b: &Partition) -> bool {
        a.count() == b.count() && Partition::new(a.labels()) == Partition::new(b.labels()) || {
            let mut map = BTreeMap::new();
            a.labels().iter().zip(b.labels()).all(|(x, y)| *map.entry(*x).or_insert(*y) == *y) && a.count() == b.count()
        }
    }

    #[test]
    fn restriction_style_basics() {
        let p = Partition::new(&[7, 7, 3]);
        assert_eq!(p.labels(), &[0, 0, 1]);
        assert_eq!(p.sizes(), vec![2, 1]);
        let mut buf = Vec::new();
        p.write_labels(&mut buf).unwrap();
        assert_eq!(Partition::read_labels(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn plug_flow_tof() {
        let g =
            build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(10.0, 1.0), 10, 1), &FractureNetwork::default())
                .unwrap();
        let u = 0.5;
        let mut flux = FluxField::zero(&g);
        flux.links.iter_mut().for_each(|f| *f = u);
        flux.sources[0] = u;
        flux.sources[9] = -u;
        let phi = vec![0.2; 10];
        let tau = compute_tof(&g, &flux, &phi).unwrap();
        assert_eq!(tau[0], 0.0);
        for c in 0..10 {
            let x = g.center(c)[0] - g.center(0)[0];
            assert!((tau[c] - 0.2 * x / u).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_tof_scales_inversely_with_flux() {
        // 0 -> 1 with flux 1, then 1 -> 2 (0.75) and 1 -> 3 (0.25)
        let parts = GridParts {
            kinds: vec![crate::mesh::CellKind::Matrix; 4],
            centers: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 1.0], [2.0, -1.0]],
            measures: vec![1.0; 4],
            apertures: vec![None; 4],
            connections: vec![
                crate::mesh::Connection { cells: [0, 1], area: 1.0, dist: [0.5, 0.5], normal: [1.0, 0.0] },
                crate::mesh::Connection { cells: [1, 2], area: 1.0, dist: [0.5, 0.5], normal: [1.0, 0.0] },
                crate::mesh::Connection { cells: [1, 3], area: 1.0, dist: [0.5, 0.5], normal: [1.0, 0.0] },
            ],
            cell_nodes: vec![Vec::new(); 4],
            ..Default::default()
        };
        let g = FineGrid::new(parts).unwrap();
        let flux = FluxField { links: vec![1.0, 0.75, 0.25], boundary: vec![], sources: vec![1.0, 0.0, -0.75, -0.25] };
        let tau = compute_tof(&g, &flux, &[1.0; 4]).unwrap();
        // τ1 = 1, branches add V/F on top of it
        assert!((tau[1] - 1.0).abs() < 1e-15);
        assert!((tau[2] - (1.0 + 4.0 / 3.0)).abs() < 1e-15);
        assert!((tau[3] - (1.0 + 4.0)).abs() < 1e-15);
        assert!(((tau[3] - tau[1]) / (tau[2] - tau[1]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stagnant_cells_are_capped() {
        let g = square(3, &FractureNetwork::default());
        let mut flux = FluxField::zero(&g);
        // flow only along the bottom row
        flux.sources[0] = 1.0;
        flux.sources[2] = -1.0;
        for (k, l) in g.links().iter().enumerate() {
            if l.cells == [0, 1] || l.cells == [1, 2] {
                flux.links[k] = 1.0;
            }
        }
        let tau = compute_tof(&g, &flux, &[1.0; 9]).unwrap();
        let max_swept = tau[2];
        assert_eq!(tau[4], 10.0 * max_swept);
    }

    #[test]
    fn indicator_cases() {
        let g = square(4, &FractureNetwork::default());
        let p = indicator_partition(&g, &[3.0; 16], 5, BinScale::Log10).unwrap();
        assert_eq!(p.count(), 1);
        // two values in the left and right halves
        let field: Vec<f64> = (0..16).map(|c| if c % 4 < 2 { 1.0 } else { 100.0 }).collect();
        assert_eq!(indicator_partition(&g, &field, 2, BinScale::Log10).unwrap().count(), 2);
        // the same value in two disjoint stripes gives two cells
        let field: Vec<f64> = (0..16).map(|c| if c % 4 == 1 { 1.0 } else { 100.0 }).collect();
        assert_eq!(indicator_partition(&g, &field, 2, BinScale::Linear).unwrap().count(), 3);
        assert!(indicator_partition(&g, &field, 0, BinScale::Linear).is_err());
    }

    #[test]
    fn distance_cases() {
        let net = FractureNetwork::new(vec![Segment::new([0.0, 4.0], [8.0, 4.0], 0.01)]).unwrap();
        let g = square(8, &net);
        let d = g.distance_to_fracture().unwrap();
        let huge = split_hybrid(&distance_partition(&g, &d, &[1e6]).unwrap(), &g);
        // two matrix blocks and one fracture chain
        assert_eq!(huge.count(), 3);
        let rings = split_hybrid(&distance_partition(&g, &d, &[1.0, 2.0]).unwrap(), &g);
        // per side: rows at d=0.5 | 1.5,2.5 | 3.5
        assert_eq!(rings.count(), 7);
        let fine = split_hybrid(&distance_partition(&g, &d, &[1e-3; 1]).unwrap(), &g);
        assert!(fine.count() >= 3);
    }

    #[test]
    fn intersection_identities() {
        let g = square(4, &FractureNetwork::default());
        // 2x2-block checkerboard and one-row stripes
        let checker: Vec<usize> = (0..16).map(|c| ((c % 4) / 2 + (c / 8)) % 2).collect();
        let stripes: Vec<usize> = (0..16).map(|c| (c / 4) % 2).collect();
        let checker = Partition::new(&checker);
        let stripes = Partition::new(&stripes);
        let one = Partition::single(16);
        let s = enforce_connected(&stripes, &g);
        assert!(same_up_to_relabel(&intersect_partitions(&g, &s, &one), &s));
        assert!(same_up_to_relabel(&intersect_partitions(&g, &s, &s), &s));
        let both = intersect_partitions(&g, &checker, &stripes);
        assert_eq!(both.count(), 8);
        let ab = intersect_partitions(&g, &s, &box_partition(&g, 2, 1).unwrap());
        let ba = intersect_partitions(&g, &box_partition(&g, 2, 1).unwrap(), &s);
        assert!(same_up_to_relabel(&ab, &ba));
        assert_eq!(ab.count(), 8);
    }

    #[test]
    fn hybrid_split_and_connectivity() {
        let net = FractureNetwork::new(vec![Segment::new([0.0, 2.0], [4.0, 2.0], 0.01)]).unwrap();
        let g = square(4, &net);
        let one = Partition::single(g.cell_count());
        let split = split_hybrid(&one, &g);
        assert_eq!(split.count(), 3);
        assert_eq!(split_hybrid(&split, &g), split);
        split.validate(&g).unwrap();

        let plain = square(2, &FractureNetwork::default());
        // both labels only touch at a corner
        let diag = Partition::new(&[0, 1, 1, 0]);
        assert_eq!(enforce_connected(&diag, &plain).count(), 4);
        let ok = Partition::new(&[0, 0, 1, 1]);
        assert_eq!(enforce_connected(&ok, &plain), ok);
    }

    #[test]
    fn merging_small_cells() {
        let g = square(4, &FractureNetwork::default());
        let mut labels = vec![0; 16];
        labels[15] = 1;
        let merged = merge_small(&Partition::new(&labels), &g, 4);
        assert_eq!(merged.count(), 1);
    }

    #[test]
    fn stats() {
        let g = square(3, &FractureNetwork::default());
        let s = partition_stats(&Partition::identity(9), &g);
        assert_eq!(s.coarsening_factor, 1.0);
        assert!((coarsening_factor(6889, 601) - 11.46).abs() < 0.01);
        assert!((coarsening_factor(103893, 1852) - 56.1).abs() < 0.1);
    }

    #[test]
    fn transfer_to_refined_grid() {
        let mk = |n: usize| {
            let net = FractureNetwork::new(vec![
                Segment::new([0.0, 4.0], [8.0, 4.0], 0.01),
                Segment::new([2.0, 0.0], [2.0, 8.0], 0.01),
            ])
            .unwrap();
            build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(8.0, 8.0), n, n), &net).unwrap()
        };
        let (g1, g2) = (mk(8), mk(16));
        let p1 = split_hybrid(&box_partition(&g1, 2, 2).unwrap(), &g1);
        let p2 = transfer_partition(&g1, &p1, &g2).unwrap();
        p2.validate(&g2).unwrap();
        assert_eq!(p1.count(), p2.count());
    }

    #[test]
    fn pipeline_on_five_spot() {
        let mut segs = Vec::new();
        for c in [250.0, 500.0, 750.0] {
            segs.push(Segment::new([0.0, c], [1000.0, c], 0.01));
            segs.push(Segment::new([c, 0.0], [c, 1000.0], 0.01));
        }
        let net = FractureNetwork::new(segs).unwrap();
        let g = build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(1000.0, 1000.0), 40, 40), &net).unwrap();
        let fp = FlowProps::uniform(&g, 1e-15, 1e-3).unwrap();
        let mut wells = WellSet::default();
        wells.push("inj", WellLocation::Point([500.0, 500.0]), WellControl::RateInjector { rate: 1e-3 });
        wells.push("prod", WellLocation::FractureOutlets, WellControl::RateProducer { rate: 1e-3 });
        let (_, flux) = solve_flow(&g, &fp, &wells, &BoundaryConditions::no_flow()).unwrap();
        let phi: Vec<f64> = (0..g.cell_count()).map(|c| if g.kind(c).is_fracture() { 1.0 } else { 1e-3 }).collect();
        let tau = compute_tof(&g, &flux, &phi).unwrap();
        let cap = tau.iter().copied().fold(0.0, f64::max);
        // upwind averaging: a cell is later than the earliest cell feeding it
        let mut earliest = vec![f64::INFINITY; g.cell_count()];
        for (l, f) in g.links().iter().zip(&flux.links) {
            let (up, down) = if *f > 0.0 { (l.cells[0], l.cells[1]) } else { (l.cells[1], l.cells[0]) };
            // stagnant corners are capped and only leak round-off fluxes
            if *f != 0.0 && tau[up] < cap {
                earliest[down] = earliest[down].min(tau[up]);
            }
        }
        for c in 0..g.cell_count() {
            assert!(tau[c] >= 0.0);
            if earliest[c].is_finite() && tau[c] < cap && flux.sources[c] <= 0.0 {
                assert!(tau[c] >= earliest[c]);
            }
        }
        let params =
            CoarsenParams { distance_widths: Some(geometric_widths(50.0, 2.0, 3)), ..CoarsenParams::default() };
        let p = coarsen(&g, Some(&flux), &phi, &params).unwrap();
        p.validate(&g).unwrap();
        assert!(p.sizes().iter().all(|&s| s >= 1));
    }
}
