//! Restriction and prolongation operators for coarse conduction.
//!
//! Prolongation columns (basis functions) start as coarse-cell indicators and
//! are smoothed by damped Jacobi on the unscaled conduction operator. Every
//! sweep is truncated to the basis' interaction region and rescaled to a
//! partition of unity. A basis stops when its discrete energy `Pᵢᵀ A Pᵢ`
//! would grow.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;

use crate::coarsen::Partition;
use crate::mesh::FineGrid;
use crate::sparse::SparseMatrix;
use crate::{Error, Result};

/// `R_ij = 1` when fine cell `j` belongs to coarse cell `i`.
pub fn restriction_matrix(p: &Partition) -> SparseMatrix {
    let t: Vec<(usize, usize, f64)> = p.labels().iter().enumerate().map(|(j, &i)| (i, j, 1.0)).collect();
    SparseMatrix::from_triplets(p.count(), p.fine_count(), &t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegionMode {
    /// Own cells plus node-sharing neighbours, minus neighbours separated by
    /// a fracture and minus the centre cell of every other coarse cell.
    /// Matrix bases never enter fracture cells.
    #[default]
    Vertex,
    /// As `Vertex`, but matrix bases may also occupy neighbouring fracture cells.
    VertexWithFractures,
    /// No truncation at all.
    Global,
}

/// Fine cell of each coarse cell closest to its volume-weighted centroid.
pub fn coarse_centers(p: &Partition, grid: &FineGrid) -> Vec<usize> {
    let members = p.members();
    members
        .iter()
        .map(|cells| {
            let vol: f64 = cells.iter().map(|&c| grid.measure(c)).sum();
            let mut g = [0.0; 2];
            for &c in cells {
                let x = grid.center(c);
                g[0] += grid.measure(c) * x[0] / vol;
                g[1] += grid.measure(c) * x[1] / vol;
            }
            *cells
                .iter()
                .min_by(|&&a, &&b| {
                    let da = crate::geometry::distance(grid.center(a), g);
                    let db = crate::geometry::distance(grid.center(b), g);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect()
}

/// Per coarse cell, the sorted fine cells its basis function may occupy.
pub fn interaction_regions(p: &Partition, grid: &FineGrid, mode: RegionMode) -> Vec<Vec<usize>> {
    let n = grid.cell_count();
    if mode == RegionMode::Global {
        return vec![(0..n).collect(); p.count()];
    }
    let labels = p.labels();
    let frac = p.fracture_flags(grid);
    let has_nodes = (0..n).all(|c| !grid.cell_nodes(c).is_empty());
    // coarse neighbour -> contact through at least one fracture-free node
    let mut contacts: Vec<BTreeMap<usize, bool>> = vec![BTreeMap::new(); p.count()];
    if has_nodes {
        let mut node_coarse: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut node_frac: BTreeSet<usize> = BTreeSet::new();
        for c in 0..n {
            for &v in grid.cell_nodes(c) {
                node_coarse.entry(v).or_default().insert(labels[c]);
                if grid.kind(c).is_fracture() {
                    node_frac.insert(v);
                }
            }
        }
        for (v, set) in &node_coarse {
            let clean = !node_frac.contains(v);
            for &i in set {
                for &k in set {
                    if i != k {
                        *contacts[i].entry(k).or_insert(false) |= clean;
                    }
                }
            }
        }
    } else {
        for iface in p.interfaces(grid) {
            let [a, b] = iface.cells;
            contacts[a].insert(b, true);
            contacts[b].insert(a, true);
        }
    }
    let members = p.members();
    let centers = coarse_centers(p, grid);
    (0..p.count())
        .map(|i| {
            let mut cells = members[i].clone();
            for (&k, &clean) in &contacts[i] {
                if frac[k] && !frac[i] && mode == RegionMode::Vertex {
                    continue;
                }
                if frac[i] || frac[k] || clean {
                    cells.extend(members[k].iter().copied().filter(|&c| c != centers[k]));
                }
            }
            cells.sort_unstable();
            cells.dedup();
            cells
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisMode {
    Constant,
    #[default]
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreezeMode {
    /// A terminated basis freezes every basis on its interaction region.
    #[default]
    AllBases,
    /// A terminated basis only fixes its own column.
    OwnBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    NotSmoothed,
    MaxIterations,
    Residual,
    AllTerminated,
    DiagonalCheck,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::NotSmoothed => "not_smoothed",
            StopReason::MaxIterations => "max_iterations",
            StopReason::Residual => "residual",
            StopReason::AllTerminated => "all_terminated",
            StopReason::DiagonalCheck => "diagonal_check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingControls {
    pub omega: f64,
    pub max_iterations: usize,
    /// Stop once `max |A P / D|` falls below this fraction of its initial value.
    pub tolerance: f64,
    pub clamp_negative: bool,
    pub energy_termination: bool,
    pub freeze: FreezeMode,
    pub diagonal_check: bool,
}

impl Default for SmoothingControls {
    fn default() -> Self {
        Self {
            omega: 2.0 / 3.0,
            max_iterations: 100,
            tolerance: 5e-3,
            clamp_negative: true,
            energy_termination: true,
            freeze: FreezeMode::AllBases,
            diagonal_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub mode: BasisMode,
    /// `N_f × N_c`
    pub prolongation: SparseMatrix,
    /// `N_c × N_f`
    pub restriction: SparseMatrix,
    pub regions: Vec<Vec<usize>>,
    pub frozen: Vec<bool>,
    /// Accepted energies per basis, starting with the indicator's energy.
    pub energy: Vec<Vec<f64>>,
    pub iterations_used: Vec<usize>,
    pub global_iterations: usize,
    pub active: Vec<bool>,
    pub stop_reason: StopReason,
    /// `max |A P / D|` relative to the start, per accepted iteration.
    pub residual_history: Vec<f64>,
    /// Largest partition-of-unity defect seen after any accepted iteration.
    pub max_unity_error: f64,
}

impl BasisSet {
    pub fn coarse_count(&self) -> usize {
        self.restriction.nrows()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Rows `fine coarse weight`.
    pub fn write_triplets(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# fine coarse weight")?;
        let mut t: Vec<(usize, usize, f64)> = self.prolongation.triplets().collect();
        t.sort_by_key(|&(j, i, _)| (i, j));
        for (j, i, v) in t {
            writeln!(w, "{j} {i} {v:e}")?;
        }
        Ok(())
    }
}

/// `P = Rᵀ`
pub fn constant_basis(p: &Partition) -> BasisSet {
    let r = restriction_matrix(p);
    let regions = p.members();
    BasisSet {
        mode: BasisMode::Constant,
        prolongation: r.transpose(),
        restriction: r,
        regions,
        frozen: vec![false; p.fine_count()],
        energy: vec![Vec::new(); p.count()],
        iterations_used: vec![0; p.count()],
        global_iterations: 0,
        active: vec![false; p.count()],
        stop_reason: StopReason::NotSmoothed,
        residual_history: Vec::new(),
        max_unity_error: 0.0,
    }
}

/// `xᵀ A x`
pub fn basis_energy(a: &SparseMatrix, x: &[f64]) -> f64 {
    a.mul_vec(x).iter().zip(x).map(|(ax, xi)| ax * xi).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCheck {
    pub offending: Vec<usize>,
}

impl DiagonalCheck {
    pub fn passed(&self) -> bool {
        self.offending.is_empty()
    }
}

/// Rows of `A_c` with a non-positive diagonal.
pub fn check_diagonal_positivity(a_c: &SparseMatrix) -> DiagonalCheck {
    DiagonalCheck {
        offending: a_c.diagonal().iter().enumerate().filter(|(_, d)| !(**d > 0.0)).map(|(i, _)| i).collect(),
    }
}

/// One basis column restricted to its region.
#[derive(Clone)]
struct Column {
    cells: Vec<usize>,
    vals: Vec<f64>,
    /// Positions of the coarse cell's own fine cells within `cells`.
    own: Vec<usize>,
}

impl Column {
    /// `(A x)` on the region cells; `scratch` must be all zero and is left so.
    fn apply(&self, a: &SparseMatrix, scratch: &mut [f64]) -> Vec<f64> {
        for (&c, &v) in self.cells.iter().zip(&self.vals) {
            scratch[c] = v;
        }
        let out = self.cells.iter().map(|&j| a.row(j).map(|(k, v)| v * scratch[k]).sum()).collect();
        for &c in &self.cells {
            scratch[c] = 0.0;
        }
        out
    }
}

fn energy_of(vals: &[f64], ap: &[f64]) -> f64 {
    vals.iter().zip(ap).map(|(v, a)| v * a).sum()
}

/// Damped-Jacobi smoothing of `P = Rᵀ` on the symmetric operator `a`.
pub fn smooth_basis(
    a: &SparseMatrix,
    p: &Partition,
    regions: &[Vec<usize>],
    controls: &SmoothingControls,
) -> Result<BasisSet> {
    let nf = p.fine_count();
    let nc = p.count();
    if a.nrows() != nf || a.ncols() != nf {
        return Err(Error::InvalidInput("operator size differs from the partition".into()));
    }
    if regions.len() != nc {
        return Err(Error::InvalidInput("one interaction region per coarse cell is required".into()));
    }
    if !(controls.omega > 0.0 && controls.omega <= 1.0) {
        return Err(Error::InvalidInput(format!("relaxation {} is outside (0, 1]", controls.omega)));
    }
    let labels = p.labels();
    let d = a.diagonal();
    if d.iter().any(|x| !(*x > 0.0)) && nf > 1 {
        return Err(Error::InvalidInput("operator has a non-positive diagonal".into()));
    }

    let mut cols: Vec<Column> = Vec::with_capacity(nc);
    for (i, region) in regions.iter().enumerate() {
        let mut cells = region.clone();
        cells.sort_unstable();
        cells.dedup();
        let own: Vec<usize> = (0..cells.len()).filter(|&k| labels[cells[k]] == i).collect();
        if own.len() != p.sizes()[i] {
            return Err(Error::InvalidInput(format!("interaction region {i} misses cells of its coarse cell")));
        }
        let vals = cells.iter().map(|&c| if labels[c] == i { 1.0 } else { 0.0 }).collect();
        cols.push(Column { cells, vals, own });
    }

    let apply_all = |cols: &[Column]| -> Vec<Vec<f64>> {
        cols.par_iter().map_init(|| vec![0.0; nf], |scratch, col| col.apply(a, scratch)).collect()
    };
    let mut ap = apply_all(&cols);
    let mut energy: Vec<f64> = cols.iter().zip(&ap).map(|(c, x)| energy_of(&c.vals, x)).collect();
    let const_diag: Vec<f64> = cols.iter().zip(&ap).map(|(c, x)| c.own.iter().map(|&k| x[k]).sum()).collect();
    let mut history: Vec<Vec<f64>> = energy.iter().map(|e| vec![*e]).collect();
    let mut iterations_used = vec![0usize; nc];
    let mut active = vec![true; nc];
    let mut frozen = vec![false; nf];

    let residual = |cols: &[Column], ap: &[Vec<f64>], active: &[bool], frozen: &[bool]| -> f64 {
        let mut r = 0.0f64;
        for (i, col) in cols.iter().enumerate() {
            if !active[i] {
                continue;
            }
            for (k, &c) in col.cells.iter().enumerate() {
                if controls.freeze == FreezeMode::OwnBasis || !frozen[c] {
                    r = r.max((ap[i][k] / d[c]).abs());
                }
            }
        }
        r
    };
    let r0 = residual(&cols, &ap, &active, &frozen);
    let mut residual_history = Vec::new();
    let mut global = 0;
    let mut max_unity_error = 0.0f64;
    let mut stop = StopReason::MaxIterations;

    while global < controls.max_iterations {
        if !active.iter().any(|x| *x) {
            stop = StopReason::AllTerminated;
            break;
        }
        if r0 == 0.0 || residual(&cols, &ap, &active, &frozen) <= controls.tolerance * r0 {
            stop = StopReason::Residual;
            break;
        }
        let mut trial_active = active.clone();
        let mut trial_frozen = frozen.clone();
        let (cand, cand_ap, cand_energy) = loop {
            let cand = sweep(&cols, &ap, &d, labels, &trial_active, &trial_frozen, controls);
            let cand_ap = apply_all(&cand);
            let cand_energy: Vec<f64> = cand.iter().zip(&cand_ap).map(|(c, x)| energy_of(&c.vals, x)).collect();
            if !controls.energy_termination {
                break (cand, cand_ap, cand_energy);
            }
            let newly: Vec<usize> = (0..nc).filter(|&i| trial_active[i] && cand_energy[i] > energy[i]).collect();
            if newly.is_empty() {
                break (cand, cand_ap, cand_energy);
            }
            for i in newly {
                trial_active[i] = false;
                if controls.freeze == FreezeMode::AllBases {
                    for &c in &cols[i].cells {
                        trial_frozen[c] = true;
                    }
                }
            }
        };

        if controls.diagonal_check {
            let bad = (0..nc).any(|i| {
                let diag: f64 = cand[i].own.iter().map(|&k| cand_ap[i][k]).sum();
                const_diag[i] > 0.0 && !(diag > 0.0)
            });
            if bad {
                stop = StopReason::DiagonalCheck;
                break;
            }
        }

        global += 1;
        for i in 0..nc {
            if trial_active[i] {
                iterations_used[i] += 1;
                history[i].push(cand_energy[i]);
            }
        }
        active = trial_active;
        frozen = trial_frozen;
        cols = cand;
        ap = cand_ap;
        energy = cand_energy;
        max_unity_error = max_unity_error.max(unity_error(&cols, nf));
        residual_history.push(if r0 > 0.0 { residual(&cols, &ap, &active, &frozen) / r0 } else { 0.0 });
    }
    if global == controls.max_iterations && stop == StopReason::MaxIterations && controls.max_iterations == 0 {
        stop = StopReason::NotSmoothed;
    }
    if controls.freeze == FreezeMode::OwnBasis {
        for (i, col) in cols.iter().enumerate() {
            if !active[i] {
                for &c in &col.cells {
                    frozen[c] = true;
                }
            }
        }
    }

    let mut t = Vec::new();
    for (i, col) in cols.iter().enumerate() {
        for (&c, &v) in col.cells.iter().zip(&col.vals) {
            if v != 0.0 {
                t.push((c, i, v));
            }
        }
    }
    Ok(BasisSet {
        mode: BasisMode::Smoothed,
        prolongation: SparseMatrix::from_triplets(nf, nc, &t),
        restriction: restriction_matrix(p),
        regions: cols.into_iter().map(|c| c.cells).collect(),
        frozen,
        energy: history,
        iterations_used,
        global_iterations: global,
        active,
        stop_reason: stop,
        residual_history,
        max_unity_error,
    })
}

fn unity_error(cols: &[Column], nf: usize) -> f64 {
    let mut sums = vec![0.0; nf];
    for col in cols {
        for (&c, &v) in col.cells.iter().zip(&col.vals) {
            sums[c] += v;
        }
    }
    sums.iter().fold(0.0, |m, s| m.max((s - 1.0).abs()))
}

/// One Jacobi update with truncation, clamping and rescaling.
fn sweep(
    cols: &[Column],
    ap: &[Vec<f64>],
    d: &[f64],
    labels: &[usize],
    active: &[bool],
    frozen: &[bool],
    controls: &SmoothingControls,
) -> Vec<Column> {
    let nf = d.len();
    let own_basis = controls.freeze == FreezeMode::OwnBasis;
    let mut cand: Vec<Column> = cols
        .par_iter()
        .enumerate()
        .map(|(i, col)| {
            let mut next = col.clone();
            if active[i] {
                for (k, &c) in col.cells.iter().enumerate() {
                    if own_basis || !frozen[c] {
                        let mut v = col.vals[k] - controls.omega * ap[i][k] / d[c];
                        if controls.clamp_negative && v < 0.0 {
                            v = 0.0;
                        }
                        next.vals[k] = v;
                    }
                }
            }
            next
        })
        .collect();

    // per-cell sums of fixed and free contributions
    let mut fixed = vec![0.0; nf];
    let mut free = vec![0.0; nf];
    for (i, col) in cand.iter().enumerate() {
        for (&c, &v) in col.cells.iter().zip(&col.vals) {
            if !active[i] || (!own_basis && frozen[c]) {
                fixed[c] += v;
            } else {
                free[c] += v;
            }
        }
    }
    // cells whose free part vanished fall back to the owner basis
    let mut owner_fill = vec![false; nf];
    for c in 0..nf {
        let frozen_cell = !own_basis && frozen[c];
        if !frozen_cell && free[c] == 0.0 && fixed[c] < 1.0 {
            owner_fill[c] = active[labels[c]];
        }
    }
    cand.par_iter_mut().enumerate().for_each(|(i, col)| {
        for k in 0..col.cells.len() {
            let c = col.cells[k];
            if !own_basis && frozen[c] {
                continue;
            }
            let target = 1.0 - fixed[c];
            if active[i] {
                col.vals[k] = if fixed[c] >= 1.0 {
                    0.0
                } else if owner_fill[c] {
                    if labels[c] == i {
                        target
                    } else {
                        0.0
                    }
                } else if free[c] > 0.0 {
                    col.vals[k] * target / free[c]
                } else {
                    col.vals[k]
                };
            } else if fixed[c] > 1.0 || (free[c] == 0.0 && !owner_fill[c] && fixed[c] > 0.0) {
                // only fixed contributions remain; renormalize them
                col.vals[k] /= fixed[c];
            }
        }
    });
    cand
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::mesh::{build_cartesian_dfm, CartesianSpec, FractureNetwork, Segment};
    use crate::thermal::{assemble_conduction, ThermalProps};

    fn chain(n: usize) -> FineGrid {
        build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(n as f64, 1.0), n, 1), &FractureNetwork::default())
            .unwrap()
    }

    fn unit_conduction(g: &FineGrid) -> SparseMatrix {
        let props = ThermalProps::new(g, 1.0, 1.0, 0.5, 1.0).unwrap();
        assemble_conduction(g, &props).unwrap()
    }

    fn column(b: &BasisSet, i: usize) -> Vec<f64> {
        let nf = b.prolongation.nrows();
        (0..nf).map(|j| b.prolongation.get(j, i)).collect()
    }

    #[test]
    fn restriction_examples() {
        let p = Partition::new(&[0, 0, 1]);
        let r = restriction_matrix(&p);
        assert_eq!(r.to_dense(), vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(r.mul_vec(&[1.0; 3]), vec![2.0, 1.0]);
        assert_eq!(r.col_sums(), vec![1.0; 3]);
    }

    #[test]
    fn nine_cell_oracle() {
        let g = chain(9);
        let a = unit_conduction(&g);
        let p = Partition::new(&[0, 0, 0, 1, 1, 1, 2, 2, 2]);
        let regions = interaction_regions(&p, &g, RegionMode::Vertex);
        assert_eq!(regions[0], vec![0, 1, 2, 3, 5]);
        let controls = SmoothingControls { max_iterations: 1, ..Default::default() };
        let b = smooth_basis(&a, &p, &regions, &controls).unwrap();
        let want = [
            [1.0, 1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0],
        ];
        for (i, w) in want.iter().enumerate() {
            let got = column(&b, i);
            for j in 0..9 {
                assert!((got[j] - w[j]).abs() < 1e-15, "basis {i} cell {j}: {} vs {}", got[j], w[j]);
            }
        }
        assert_eq!(b.energy[0][0], 1.0);
        assert!((b.energy[0][1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_iterations_is_constant() {
        let g = chain(6);
        let a = unit_conduction(&g);
        let p = Partition::new(&[0, 0, 1, 1, 2, 2]);
        let regions = interaction_regions(&p, &g, RegionMode::Vertex);
        let b = smooth_basis(&a, &p, &regions, &SmoothingControls { max_iterations: 0, ..Default::default() }).unwrap();
        assert_eq!(b.prolongation, constant_basis(&p).prolongation);
    }

    #[test]
    fn identity_partition_stays_identity() {
        let g = chain(5);
        let a = unit_conduction(&g);
        let p = Partition::identity(5);
        let regions = interaction_regions(&p, &g, RegionMode::Vertex);
        assert!(regions.iter().enumerate().all(|(i, r)| r == &vec![i]));
        let b = smooth_basis(&a, &p, &regions, &SmoothingControls { max_iterations: 5, ..Default::default() }).unwrap();
        assert_eq!(b.prolongation, SparseMatrix::identity(5));
        assert_eq!(constant_basis(&p).prolongation, SparseMatrix::identity(5));
    }

    #[test]
    fn global_sweep_matches_dense_jacobi() {
        let net = FractureNetwork::new(vec![Segment::new([0.0, 3.0], [6.0, 3.0], 0.05)]).unwrap();
        let g = build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(6.0, 6.0), 6, 6), &net).unwrap();
        let a = unit_conduction(&g);
        let p = crate::coarsen::split_hybrid(&crate::coarsen::box_partition(&g, 2, 2).unwrap(), &g);
        let regions = interaction_regions(&p, &g, RegionMode::Global);
        let controls = SmoothingControls { max_iterations: 1, energy_termination: false, ..Default::default() };
        let b = smooth_basis(&a, &p, &regions, &controls).unwrap();
        let dense = a.to_dense();
        let rt = restriction_matrix(&p).transpose().to_dense();
        let n = g.cell_count();
        for j in 0..n {
            for i in 0..p.count() {
                let ap: f64 = (0..n).map(|k| dense[j][k] * rt[k][i]).sum();
                let want = rt[j][i] - controls.omega * ap / dense[j][j];
                assert!((b.prolongation.get(j, i) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sandwich_regions() {
        let net = FractureNetwork::new(vec![Segment::new([0.0, 2.0], [4.0, 2.0], 0.01)]).unwrap();
        let g = build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(4.0, 4.0), 4, 4), &net).unwrap();
        let p = crate::coarsen::split_hybrid(&Partition::single(g.cell_count()), &g);
        let regions = interaction_regions(&p, &g, RegionMode::VertexWithFractures);
        let frac = p.fracture_flags(&g);
        let matrix: Vec<usize> = (0..p.count()).filter(|&i| !frac[i]).collect();
        let fracture = (0..p.count()).find(|&i| frac[i]).unwrap();
        let members = p.members();
        let centers = coarse_centers(&p, &g);
        for &m in &matrix {
            let other = matrix.iter().find(|&&o| o != m).unwrap();
            assert!(members[*other].iter().all(|c| !regions[m].contains(c)));
            // every fracture cell except the fracture's centre cell
            for &c in &members[fracture] {
                assert_eq!(regions[m].contains(&c), c != centers[fracture]);
            }
        }
        // fracture basis reaches both sides
        assert!(matrix.iter().all(|&m| regions[fracture].contains(&members[m][0])));
        // by default matrix bases stay out of the fracture
        let strict = interaction_regions(&p, &g, RegionMode::Vertex);
        for &m in &matrix {
            assert!(strict[m].iter().all(|&c| !g.kind(c).is_fracture()));
            assert!(members[m].iter().all(|c| strict[m].contains(c)));
        }
        assert_eq!(strict[fracture], regions[fracture]);
    }

    #[test]
    fn row_of_three() {
        let g = chain(9);
        let p = Partition::new(&[0, 0, 0, 1, 1, 1, 2, 2, 2]);
        let regions = interaction_regions(&p, &g, RegionMode::Vertex);
        assert_eq!(regions[1], vec![0, 2, 3, 4, 5, 6, 8]);
        let lone = interaction_regions(&Partition::single(9), &g, RegionMode::Vertex);
        assert_eq!(lone[0], (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn energy_examples() {
        let g = build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(2.0, 2.0), 2, 2), &FractureNetwork::default())
            .unwrap();
        let a = unit_conduction(&g);
        assert!(basis_energy(&a, &[1.0; 4]).abs() < 1e-15);
        // indicator of the left column: two unit links cross its boundary
        assert!((basis_energy(&a, &[1.0, 0.0, 1.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_check_flags_rows() {
        let a = SparseMatrix::from_dense(&[vec![1.0, -1.0], vec![-1.0, 0.0]]);
        assert_eq!(check_diagonal_positivity(&a).offending, vec![1]);
        assert!(check_diagonal_positivity(&SparseMatrix::identity(3)).passed());
    }

    #[test]
    fn many_iterations_keep_invariants() {
        let net = FractureNetwork::new(vec![
            Segment::new([0.0, 5.0], [12.0, 5.0], 0.02),
            Segment::new([7.0, 0.0], [7.0, 12.0], 0.01),
        ])
        .unwrap();
        let g = build_cartesian_dfm(&CartesianSpec::new(Rect::from_size(12.0, 12.0), 12, 12), &net).unwrap();
        let a = unit_conduction(&g);
        let p = crate::coarsen::split_hybrid(&crate::coarsen::box_partition(&g, 3, 3).unwrap(), &g);
        for freeze in [FreezeMode::AllBases, FreezeMode::OwnBasis] {
            let regions = interaction_regions(&p, &g, RegionMode::Vertex);
            let controls = SmoothingControls { max_iterations: 40, tolerance: 0.0, freeze, ..Default::default() };
            let b = smooth_basis(&a, &p, &regions, &controls).unwrap();
            assert!(b.max_unity_error < 1e-12);
            let sums = b.prolongation.row_sums();
            assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
            for e in &b.energy {
                assert!(e.windows(2).all(|w| w[1] <= w[0]));
            }
            for (j, i, v) in b.prolongation.triplets() {
                assert!(b.regions[i].binary_search(&j).is_ok());
                assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            let rap = b.restriction.matmul(&a).matmul(&b.prolongation);
            assert!(check_diagonal_positivity(&rap).passed());
        }
    }
}
