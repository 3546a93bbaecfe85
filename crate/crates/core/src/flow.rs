//! Incompressible single-phase pressure and two-point Darcy fluxes.

use std::collections::BTreeMap;

use crate::geometry::{distance, Point};
use crate::mesh::{CellKind, FineGrid};
use crate::sparse::{inf_norm, DirectSolver, SparseMatrix};
use crate::{Error, Result};

/// Cubic law permeability of a fracture with hydraulic aperture `a`.
pub fn cubic_law(a: f64) -> f64 {
    a * a / 12.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowProps {
    /// Per-cell permeability in m²; fracture cells follow the cubic law.
    permeability: Vec<f64>,
    viscosity: f64,
}

impl FlowProps {
    /// `matrix_permeability` is per cell; entries on fracture cells are
    /// replaced by `a²/12`.
    pub fn new(grid: &FineGrid, matrix_permeability: &[f64], viscosity: f64) -> Result<Self> {
        if matrix_permeability.len() != grid.cell_count() {
            return Err(Error::InvalidInput("permeability field length differs from the cell count".into()));
        }
        if !(viscosity > 0.0) {
            return Err(Error::InvalidInput(format!("viscosity {viscosity} must be positive")));
        }
        let permeability: Vec<f64> = (0..grid.cell_count())
            .map(|c| match grid.aperture(c) {
                Some(a) if grid.kind(c).is_fracture() => cubic_law(a),
                _ => matrix_permeability[c],
            })
            .collect();
        if let Some(c) = permeability.iter().position(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::InvalidInput(format!("cell {c} has non-positive permeability")));
        }
        Ok(Self { permeability, viscosity })
    }

    pub fn uniform(grid: &FineGrid, matrix_permeability: f64, viscosity: f64) -> Result<Self> {
        Self::new(grid, &vec![matrix_permeability; grid.cell_count()], viscosity)
    }

    pub fn permeability(&self) -> &[f64] {
        &self.permeability
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    /// `K/μ` per cell.
    pub fn mobility(&self) -> Vec<f64> {
        self.permeability.iter().map(|k| k / self.viscosity).collect()
    }
}

/// `A K / d` for one side of connection `conn` (viscosity not included).
pub fn half_transmissibility(grid: &FineGrid, conn: usize, side: usize, props: &FlowProps) -> Result<f64> {
    let c = &grid.connections()[conn];
    c.half_transmissibility(side, props.permeability[c.cells[side]])
}

#[derive(Debug, Clone, PartialEq)]
pub enum WellLocation {
    Cell(usize),
    /// Snapped to the cell(s) containing the point.
    Point(Point),
    /// Every fracture cell that exits through the outer boundary, sharing the
    /// rate equally.
    FractureOutlets,
    /// The fracture cell whose centre is closest to the point.
    NearestFracture(Point),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WellControl {
    /// Injection rate in m²/s (per unit depth), positive.
    RateInjector { rate: f64 },
    /// Production rate in m²/s, positive.
    RateProducer { rate: f64 },
    /// Bottom-hole pressure with productivity index `index` (m²/(Pa·s)).
    Pressure { bhp: f64, index: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Well {
    pub name: String,
    pub location: WellLocation,
    pub control: WellControl,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WellSet {
    pub wells: Vec<Well>,
}

impl WellSet {
    pub fn push(&mut self, name: &str, location: WellLocation, control: WellControl) {
        self.wells.push(Well { name: name.into(), location, control });
    }
}

/// A well resolved to weighted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedWell {
    pub cells: Vec<(usize, f64)>,
    pub control: WellControl,
}

pub fn resolve_wells(grid: &FineGrid, wells: &WellSet) -> Result<Vec<ResolvedWell>> {
    wells
        .wells
        .iter()
        .map(|w| {
            let cells = match &w.location {
                WellLocation::Cell(c) if *c < grid.cell_count() => vec![(*c, 1.0)],
                WellLocation::Cell(c) => {
                    return Err(Error::InvalidInput(format!("well {:?} references cell {c}", w.name)));
                }
                WellLocation::Point(p) => grid.locate_point(*p),
                WellLocation::NearestFracture(p) => {
                    let best = (0..grid.cell_count())
                        .filter(|&c| grid.kind(c).is_fracture())
                        .min_by(|&a, &b| distance(grid.center(a), *p).total_cmp(&distance(grid.center(b), *p)));
                    match best {
                        Some(c) => vec![(c, 1.0)],
                        None => {
                            return Err(Error::InvalidInput(format!("well {:?}: the grid has no fractures", w.name)))
                        }
                    }
                }
                WellLocation::FractureOutlets => {
                    let outlets = grid.fracture_outlets();
                    if outlets.is_empty() {
                        return Err(Error::InvalidInput(format!(
                            "well {:?}: no fracture reaches the boundary",
                            w.name
                        )));
                    }
                    let wgt = 1.0 / outlets.len() as f64;
                    outlets.into_iter().map(|c| (c, wgt)).collect()
                }
            };
            match w.control {
                WellControl::RateInjector { rate } | WellControl::RateProducer { rate } if !(rate >= 0.0) => {
                    Err(Error::InvalidInput(format!("well {:?} has negative rate", w.name)))
                }
                WellControl::Pressure { index, .. } if !(index > 0.0) => {
                    Err(Error::InvalidInput(format!("well {:?} needs a positive productivity index", w.name)))
                }
                control => Ok(ResolvedWell { cells, control }),
            }
        })
        .collect()
}

/// Fixed pressures on tagged parts of the outer boundary. Untagged faces are
/// no-flow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    pub dirichlet: BTreeMap<String, f64>,
}

impl BoundaryConditions {
    pub fn no_flow() -> Self {
        Self::default()
    }

    pub fn with_pressure(mut self, tag: &str, p: f64) -> Self {
        self.dirichlet.insert(tag.into(), p);
        self
    }
}

/// Assembled pressure equation `A p = q`.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// `T` per grid link, viscosity included.
    pub link_trans: Vec<f64>,
    /// `(T, pressure)` for boundary faces under pressure control.
    pub boundary: Vec<Option<(f64, f64)>>,
    /// Rate well sources per cell (positive = injection).
    pub rate_sources: Vec<f64>,
    /// `(cell, PI, bhp)` terms of pressure-controlled wells.
    pub pressure_wells: Vec<(usize, f64, f64)>,
}

impl PressureSystem {
    /// True when nothing fixes the pressure level.
    pub fn is_pure_neumann(&self) -> bool {
        self.boundary.iter().all(Option::is_none) && self.pressure_wells.is_empty()
    }
}

pub fn assemble_pressure(
    grid: &FineGrid,
    props: &FlowProps,
    wells: &WellSet,
    bcs: &BoundaryConditions,
) -> Result<PressureSystem> {
    let n = grid.cell_count();
    let mobility = props.mobility();
    let link_trans = grid.transmissibilities(&mobility)?;
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    let mut boundary = Vec::with_capacity(grid.boundary().len());
    for face in grid.boundary() {
        match bcs.dirichlet.get(&face.tag) {
            Some(&pb) => {
                let t = crate::mesh::half_transmissibility(face.area, mobility[face.cell], face.dist)?;
                diag[face.cell] += t;
                rhs[face.cell] += t * pb;
                boundary.push(Some((t, pb)));
            }
            None => boundary.push(None),
        }
    }
    for tag in bcs.dirichlet.keys() {
        if !grid.boundary().iter().any(|f| &f.tag == tag) {
            return Err(Error::InvalidInput(format!("no boundary faces carry the tag {tag:?}")));
        }
    }

    let mut rate_sources = vec![0.0; n];
    let mut pressure_wells = Vec::new();
    for w in resolve_wells(grid, wells)? {
        for &(c, wgt) in &w.cells {
            match w.control {
                WellControl::RateInjector { rate } => rate_sources[c] += wgt * rate,
                WellControl::RateProducer { rate } => rate_sources[c] -= wgt * rate,
                WellControl::Pressure { bhp, index } => {
                    let pi = index * wgt;
                    diag[c] += pi;
                    rhs[c] += pi * bhp;
                    pressure_wells.push((c, pi, bhp));
                }
            }
        }
    }
    for c in 0..n {
        rhs[c] += rate_sources[c];
    }

    let matrix = grid.laplacian(&link_trans).add_diagonal(&diag);
    let system = PressureSystem { matrix, rhs, link_trans, boundary, rate_sources, pressure_wells };
    if system.is_pure_neumann() {
        let net: f64 = system.rate_sources.iter().sum();
        let scale: f64 = system.rate_sources.iter().map(|q| q.abs()).sum();
        if net.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::IncompatibleRates { net });
        }
    }
    Ok(system)
}

/// Direct solve. A pure-Neumann system is solved with cell 0 pinned and then
/// shifted to zero mean.
pub fn solve_pressure(system: &PressureSystem) -> Result<Vec<f64>> {
    let n = system.rhs.len();
    let tol = 1e-10;
    let p = if system.is_pure_neumann() {
        if n == 1 {
            return Ok(vec![0.0]);
        }
        let rest: Vec<usize> = (1..n).collect();
        let reduced = system.matrix.submatrix(&rest, &rest);
        let solver = DirectSolver::cholesky(&reduced)?;
        let mut p = vec![0.0];
        p.extend(solver.solve_checked(&system.rhs[1..], tol)?);
        let mean = p.iter().sum::<f64>() / n as f64;
        p.iter_mut().for_each(|v| *v -= mean);
        p
    } else {
        DirectSolver::cholesky(&system.matrix)?.solve_checked(&system.rhs, tol)?
    };
    let ap = system.matrix.mul_vec(&p);
    let res: Vec<f64> = ap.iter().zip(&system.rhs).map(|(a, b)| a - b).collect();
    let scale = (system.matrix.norm_inf() * inf_norm(&p) + inf_norm(&system.rhs)).max(f64::MIN_POSITIVE);
    if inf_norm(&res) > tol * scale {
        return Err(Error::Solver(format!("pressure residual {:e} exceeds tolerance", inf_norm(&res) / scale)));
    }
    Ok(p)
}

/// Volumetric fluxes (m²/s per unit depth).
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    /// Per grid link, positive from `cells[0]` to `cells[1]`.
    pub links: Vec<f64>,
    /// Per boundary face, positive outward.
    pub boundary: Vec<f64>,
    /// Net well source per cell, positive for injection.
    pub sources: Vec<f64>,
}

impl FluxField {
    pub fn zero(grid: &FineGrid) -> Self {
        Self {
            links: vec![0.0; grid.links().len()],
            boundary: vec![0.0; grid.boundary().len()],
            sources: vec![0.0; grid.cell_count()],
        }
    }

    /// Outflow minus source per cell; zero for a conservative field.
    pub fn mass_balance(&self, grid: &FineGrid) -> Vec<f64> {
        let mut r: Vec<f64> = self.sources.iter().map(|q| -q).collect();
        for (l, f) in grid.links().iter().zip(&self.links) {
            r[l.cells[0]] += f;
            r[l.cells[1]] -= f;
        }
        for (face, f) in grid.boundary().iter().zip(&self.boundary) {
            r[face.cell] += f;
        }
        r
    }

    /// Cells with net injection.
    pub fn injector_cells(&self) -> Vec<usize> {
        (0..self.sources.len()).filter(|&c| self.sources[c] > 0.0).collect()
    }

    /// Cells with net production.
    pub fn producer_cells(&self) -> Vec<usize> {
        (0..self.sources.len()).filter(|&c| self.sources[c] < 0.0).collect()
    }

    pub fn check_grid(&self, grid: &FineGrid) -> Result<()> {
        if self.links.len() != grid.links().len()
            || self.boundary.len() != grid.boundary().len()
            || self.sources.len() != grid.cell_count()
        {
            return Err(Error::InvalidInput("flux field does not match the grid".into()));
        }
        Ok(())
    }
}

/// `v_ij = T_ij (p_i - p_j)` on links, plus boundary and well fluxes.
pub fn compute_fluxes(grid: &FineGrid, system: &PressureSystem, p: &[f64]) -> Result<FluxField> {
    if p.len() != grid.cell_count() {
        return Err(Error::InvalidInput("pressure vector length differs from the cell count".into()));
    }
    let links = grid.links().iter().zip(&system.link_trans).map(|(l, t)| t * (p[l.cells[0]] - p[l.cells[1]])).collect();
    let boundary = grid
        .boundary()
        .iter()
        .zip(&system.boundary)
        .map(|(face, bc)| bc.map_or(0.0, |(t, pb)| t * (p[face.cell] - pb)))
        .collect();
    let mut sources = system.rate_sources.clone();
    for &(c, pi, bhp) in &system.pressure_wells {
        sources[c] += pi * (bhp - p[c]);
    }
    Ok(FluxField { links, boundary, sources })
}

/// Assembles, solves and returns `(pressure, fluxes)`.
pub fn solve_flow(
    grid: &FineGrid,
    props: &FlowProps,
    wells: &WellSet,
    bcs: &BoundaryConditions,
) -> Result<(Vec<f64>, FluxField)> {
    let system = assemble_pressure(grid, props, wells, bcs)?;
    let p = solve_pressure(&system)?;
    let flux = compute_fluxes(grid, &system, &p)?;
    Ok((p, flux))
}

/// Ratio of the largest fracture to the smallest matrix permeability.
pub fn permeability_contrast(grid: &FineGrid, props: &FlowProps) -> Option<f64> {
    let (mut kf, mut km) = (0.0f64, f64::INFINITY);
    for c in 0..grid.cell_count() {
        match grid.kind(c) {
            CellKind::Matrix => km = km.min(props.permeability[c]),
            _ => kf = kf.max(props.permeability[c]),
        }
    }
    (kf > 0.0 && km.is_finite()).then(|| kf / km)
}
