//! Advection-conduction heat transport on the fine grid.
//!
//! The semi-discrete system is `M dT/dt + (A_adv + A_cond) T = s` where `M`
//! is the diagonal of `(ρc)_eff V`. Operators are kept unscaled; dividing by
//! `M` is equivalent and only done on request.

use crate::flow::FluxField;
use crate::mesh::FineGrid;
use crate::sparse::{DirectSolver, SparseMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalProps {
    /// Rock volumetric heat capacity, J/(m³K).
    pub rock_capacity: f64,
    /// Fluid volumetric heat capacity, J/(m³K).
    pub fluid_capacity: f64,
    /// Per-cell porosity (1 on fracture cells).
    pub porosity: Vec<f64>,
    /// Effective conductivity, W/(mK).
    pub conductivity: f64,
}

impl ThermalProps {
    pub fn new(grid: &FineGrid, rock: f64, fluid: f64, matrix_porosity: f64, conductivity: f64) -> Result<Self> {
        let porosity =
            (0..grid.cell_count()).map(|c| if grid.kind(c).is_fracture() { 1.0 } else { matrix_porosity }).collect();
        let props = Self { rock_capacity: rock, fluid_capacity: fluid, porosity, conductivity };
        props.validate(grid)?;
        Ok(props)
    }

    pub fn validate(&self, grid: &FineGrid) -> Result<()> {
        if !(self.rock_capacity > 0.0 && self.fluid_capacity > 0.0) {
            return Err(Error::InvalidInput("heat capacities must be positive".into()));
        }
        if !(self.conductivity > 0.0) {
            return Err(Error::InvalidInput("conductivity must be positive".into()));
        }
        if self.porosity.len() != grid.cell_count() {
            return Err(Error::InvalidInput("porosity field length differs from the cell count".into()));
        }
        if let Some(c) = self.porosity.iter().position(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::InvalidInput(format!("porosity of cell {c} is outside (0, 1]")));
        }
        Ok(())
    }

    /// `φ (ρc)_f + (1 - φ) (ρc)_r`
    pub fn mix(&self, porosity: f64) -> f64 {
        porosity * self.fluid_capacity + (1.0 - porosity) * self.rock_capacity
    }
}

/// Per-cell `(ρc)_eff`.
pub fn effective_capacity(props: &ThermalProps, grid: &FineGrid) -> Vec<f64> {
    (0..grid.cell_count()).map(|c| props.mix(props.porosity[c])).collect()
}

/// Per-cell `(ρc)_eff V`, the diagonal of the mass matrix.
pub fn cell_capacity(props: &ThermalProps, grid: &FineGrid) -> Vec<f64> {
    effective_capacity(props, grid).iter().zip(grid.measures()).map(|(c, v)| c * v).collect()
}

/// Temperatures of fluid entering the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inflow {
    /// Temperature of injected fluid.
    pub injection: f64,
    /// Temperature of fluid entering through open boundary faces.
    pub boundary: f64,
}

/// Upwind advection operator scaled by `(ρc)_f`, and its right-hand side.
pub fn assemble_advection(
    grid: &FineGrid,
    flux: &FluxField,
    props: &ThermalProps,
    inflow: Inflow,
) -> Result<(SparseMatrix, Vec<f64>)> {
    flux.check_grid(grid)?;
    let n = grid.cell_count();
    let rc = props.fluid_capacity;
    let mut t = Vec::with_capacity(2 * grid.links().len() + n);
    let mut rhs = vec![0.0; n];
    for c in 0..n {
        t.push((c, c, 0.0));
    }
    for (l, &f) in grid.links().iter().zip(&flux.links) {
        let [i, j] = l.cells;
        let (up, down) = if f >= 0.0 { (i, j) } else { (j, i) };
        let q = rc * f.abs();
        if q != 0.0 {
            t.push((up, up, q));
            t.push((down, up, -q));
        }
    }
    for (face, &f) in grid.boundary().iter().zip(&flux.boundary) {
        if f > 0.0 {
            t.push((face.cell, face.cell, rc * f));
        } else if f < 0.0 {
            rhs[face.cell] -= rc * f * inflow.boundary;
        }
    }
    for (c, &q) in flux.sources.iter().enumerate() {
        if q > 0.0 {
            rhs[c] += rc * q * inflow.injection;
        } else if q < 0.0 {
            t.push((c, c, -rc * q));
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, &t), rhs))
}

/// Two-point conduction operator with insulated outer boundary.
pub fn assemble_conduction(grid: &FineGrid, props: &ThermalProps) -> Result<SparseMatrix> {
    let trans = grid.transmissibilities(&vec![props.conductivity; grid.cell_count()])?;
    Ok(grid.laplacian(&trans))
}

/// `M dT/dt + A T = s` with diagonal `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSystem {
    pub operator: SparseMatrix,
    pub capacity: Vec<f64>,
    pub source: Vec<f64>,
}

impl ThermalSystem {
    pub fn new(operator: SparseMatrix, capacity: Vec<f64>, source: Vec<f64>) -> Result<Self> {
        let n = capacity.len();
        if operator.nrows() != n || operator.ncols() != n || source.len() != n {
            return Err(Error::InvalidInput("thermal system dimensions disagree".into()));
        }
        if capacity.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::InvalidInput("capacities must be positive".into()));
        }
        Ok(Self { operator, capacity, source })
    }

    pub fn len(&self) -> usize {
        self.capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty()
    }

    /// `M⁻¹ A`, the capacity-scaled operator.
    pub fn scaled_operator(&self) -> SparseMatrix {
        let inv: Vec<f64> = self.capacity.iter().map(|c| 1.0 / c).collect();
        self.operator.scale_rows(&inv)
    }

    /// `Σ M_i T_i`
    pub fn energy(&self, temperature: &[f64]) -> f64 {
        self.capacity.iter().zip(temperature).map(|(c, t)| c * t).sum()
    }
}

/// Fine-scale system `A_adv + A_cond`.
pub fn assemble_fine(grid: &FineGrid, flux: &FluxField, props: &ThermalProps, inflow: Inflow) -> Result<ThermalSystem> {
    let (adv, source) = assemble_advection(grid, flux, props, inflow)?;
    let cond = assemble_conduction(grid, props)?;
    ThermalSystem::new(adv.add(&cond), cell_capacity(props, grid), source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeScheme {
    #[default]
    Bdf2,
    ImplicitEuler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportState {
    pub temperature: Vec<f64>,
    /// Level `n-1`; absent before the first step.
    pub previous: Option<Vec<f64>>,
    pub time: f64,
    pub step: usize,
}

impl TransportState {
    pub fn initial(temperature: Vec<f64>) -> Self {
        Self { temperature, previous: None, time: 0.0, step: 0 }
    }

    /// Starts from two known levels so that the first step is already BDF2.
    pub fn with_history(temperature: Vec<f64>, previous: Vec<f64>, time: f64) -> Self {
        Self { temperature, previous: Some(previous), time, step: 1 }
    }
}

/// Fixed-step integrator. Both step matrices are factorized once.
#[derive(Debug)]
pub struct Stepper {
    scheme: TimeScheme,
    dt: f64,
    capacity: Vec<f64>,
    source: Vec<f64>,
    euler: DirectSolver,
    bdf2: Option<DirectSolver>,
}

impl Stepper {
    pub fn new(system: &ThermalSystem, dt: f64, scheme: TimeScheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        let m_over_dt: Vec<f64> = system.capacity.iter().map(|c| c / dt).collect();
        let euler = DirectSolver::lu(&system.operator.add_diagonal(&m_over_dt))?;
        let bdf2 = match scheme {
            TimeScheme::Bdf2 => {
                let d: Vec<f64> = m_over_dt.iter().map(|m| 1.5 * m).collect();
                Some(DirectSolver::lu(&system.operator.add_diagonal(&d))?)
            }
            TimeScheme::ImplicitEuler => None,
        };
        Ok(Self { scheme, dt, capacity: system.capacity.clone(), source: system.source.clone(), euler, bdf2 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &TransportState) -> Result<TransportState> {
        self.step_with_source(state, &self.source)
    }

    /// One step with an explicit right-hand side `s(t_{n+1})`.
    pub fn step_with_source(&self, state: &TransportState, source: &[f64]) -> Result<TransportState> {
        let tn = &state.temperature;
        let (rhs, solver): (Vec<f64>, &DirectSolver) = match (&self.bdf2, &state.previous) {
            (Some(solver), Some(prev)) => (
                (0..tn.len()).map(|i| self.capacity[i] * (2.0 * tn[i] - 0.5 * prev[i]) / self.dt + source[i]).collect(),
                solver,
            ),
            _ => ((0..tn.len()).map(|i| self.capacity[i] * tn[i] / self.dt + source[i]).collect(), &self.euler),
        };
        let next = solver.solve_checked(&rhs, 1e-10)?;
        let previous = (self.scheme == TimeScheme::Bdf2).then(|| tn.clone());
        Ok(TransportState { temperature: next, previous, time: state.time + self.dt, step: state.step + 1 })
    }
}

/// Fixed time step and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    pub end_time: f64,
}

impl Schedule {
    pub fn steps(&self) -> usize {
        (self.end_time / self.dt).round().max(1.0) as usize
    }
}

/// Runs `schedule` from `initial`, calling `observe` after every step.
pub fn simulate(
    system: &ThermalSystem,
    initial: &[f64],
    schedule: Schedule,
    scheme: TimeScheme,
    mut observe: impl FnMut(&TransportState),
) -> Result<TransportState> {
    if initial.len() != system.len() {
        return Err(Error::InvalidInput("initial temperature length differs from the system size".into()));
    }
    let stepper = Stepper::new(system, schedule.dt, scheme)?;
    let mut state = TransportState::initial(initial.to_vec());
    for _ in 0..schedule.steps() {
        state = stepper.step(&state)?;
        observe(&state);
    }
    Ok(state)
}

/// Rate-weighted mean temperature over producing cells (`sources < 0`).
pub fn production_temperature(temperature: &[f64], sources: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (t, q) in temperature.iter().zip(sources) {
        if *q < 0.0 {
            num -= q * t;
            den -= q;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Cell-averaged Darcy velocity `(1/V) Σ_f F_f (x_f - x_c)`.
pub fn cell_velocity(grid: &FineGrid, flux: &FluxField) -> Result<Vec<[f64; 2]>> {
    flux.check_grid(grid)?;
    let mut v = vec![[0.0; 2]; grid.cell_count()];
    let mut add = |c: usize, f: f64, x: [f64; 2]| {
        let xc = grid.center(c);
        v[c][0] += f * (x[0] - xc[0]);
        v[c][1] += f * (x[1] - xc[1]);
    };
    for (k, l) in grid.links().iter().enumerate() {
        let x = grid.link_point(k);
        add(l.cells[0], flux.links[k], x);
        add(l.cells[1], -flux.links[k], x);
    }
    for (face, &f) in grid.boundary().iter().zip(&flux.boundary) {
        let xc = grid.center(face.cell);
        add(face.cell, f, [xc[0] + face.dist * face.normal[0], xc[1] + face.dist * face.normal[1]]);
    }
    for (c, vc) in v.iter_mut().enumerate() {
        let m = grid.measure(c);
        vc[0] /= m;
        vc[1] /= m;
    }
    Ok(v)
}

/// `Pe = L |u| (ρc)_eff / C` per cell.
pub fn peclet_field(grid: &FineGrid, flux: &FluxField, props: &ThermalProps, length: f64) -> Result<Vec<f64>> {
    if !(length > 0.0) {
        return Err(Error::InvalidInput("Péclet length scale must be positive".into()));
    }
    let cap = effective_capacity(props, grid);
    Ok(cell_velocity(grid, flux)?
        .iter()
        .zip(&cap)
        .map(|(u, c)| peclet(length, u[0].hypot(u[1]), *c, props.conductivity))
        .collect())
}

pub fn peclet(length: f64, speed: f64, capacity: f64, conductivity: f64) -> f64 {
    length * speed * capacity / conductivity
}
