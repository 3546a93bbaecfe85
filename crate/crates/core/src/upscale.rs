//! Coarse heat transport on a partition of the fine grid.

use crate::basis::{check_diagonal_positivity, restriction_matrix, BasisMode, BasisSet};
use crate::coarsen::Partition;
use crate::flow::FluxField;
use crate::mesh::FineGrid;
use crate::sparse::SparseMatrix;
use crate::thermal::{simulate, Inflow, Schedule, ThermalProps, ThermalSystem, TimeScheme, TransportState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Upwinding {
    /// One upwind decision per coarse interface from the summed fine fluxes.
    #[default]
    NetFlux,
    /// Each fine face is upwinded separately and then aggregated.
    PerFace,
}

/// Summed fine fluxes across each coarse interface, in `Partition::interfaces` order.
/// Positive values flow from `cells[0]` to `cells[1]`.
pub fn coarse_net_fluxes(p: &Partition, grid: &FineGrid, flux: &FluxField) -> Result<Vec<([usize; 2], f64)>> {
    flux.check_grid(grid)?;
    Ok(p.interfaces(grid)
        .into_iter()
        .map(|iface| {
            let net = iface.links.iter().map(|&(k, s)| s * flux.links[k]).sum();
            (iface.cells, net)
        })
        .collect())
}

/// Coarse upwind operator, unscaled by capacity, and its right-hand side.
///
/// Boundary faces and wells keep their fine-scale treatment: outflow enters
/// the diagonal of the owning coarse cell and inflow carries its temperature
/// into the right-hand side.
pub fn coarse_advection(
    p: &Partition,
    grid: &FineGrid,
    flux: &FluxField,
    props: &ThermalProps,
    inflow: Inflow,
    upwinding: Upwinding,
) -> Result<(SparseMatrix, Vec<f64>)> {
    flux.check_grid(grid)?;
    if p.fine_count() != grid.cell_count() {
        return Err(Error::InvalidInput("partition length differs from the cell count".into()));
    }
    let nc = p.count();
    let rc = props.fluid_capacity;
    let labels = p.labels();
    let mut t: Vec<(usize, usize, f64)> = (0..nc).map(|c| (c, c, 0.0)).collect();
    let mut upwind = |from: usize, to: usize, f: f64| {
        let (up, down) = if f >= 0.0 { (from, to) } else { (to, from) };
        let q = rc * f.abs();
        if q != 0.0 {
            t.push((up, up, q));
            t.push((down, up, -q));
        }
    };
    match upwinding {
        Upwinding::NetFlux => {
            for ([a, b], f) in coarse_net_fluxes(p, grid, flux)? {
                upwind(a, b, f);
            }
        }
        Upwinding::PerFace => {
            for (l, &f) in grid.links().iter().zip(&flux.links) {
                let (a, b) = (labels[l.cells[0]], labels[l.cells[1]]);
                if a != b {
                    upwind(a, b, f);
                }
            }
        }
    }
    let mut rhs = vec![0.0; nc];
    for (face, &f) in grid.boundary().iter().zip(&flux.boundary) {
        let c = labels[face.cell];
        if f > 0.0 {
            t.push((c, c, rc * f));
        } else if f < 0.0 {
            rhs[c] -= rc * f * inflow.boundary;
        }
    }
    for (j, &q) in flux.sources.iter().enumerate() {
        let c = labels[j];
        if q > 0.0 {
            rhs[c] += rc * q * inflow.injection;
        } else if q < 0.0 {
            t.push((c, c, -rc * q));
        }
    }
    Ok((SparseMatrix::from_triplets(nc, nc, &t), rhs))
}

/// `R A P`, with rows whose diagonal is not positive replaced by `R A Rᵀ`.
/// Returns the operator and the replaced rows.
pub fn coarse_conduction(a: &SparseMatrix, basis: &BasisSet) -> Result<(SparseMatrix, Vec<usize>)> {
    let r = &basis.restriction;
    let pm = &basis.prolongation;
    if a.nrows() != r.ncols() || pm.nrows() != a.ncols() || pm.ncols() != r.nrows() {
        return Err(Error::InvalidInput("operator and basis dimensions disagree".into()));
    }
    let ac = r.matmul(&a.matmul(pm));
    let check = check_diagonal_positivity(&ac);
    if check.passed() || basis.mode == BasisMode::Constant {
        return Ok((ac, Vec::new()));
    }
    let constant = r.matmul(&a.matmul(&r.transpose()));
    // rows where even the constant basis has no coupling stay as they are
    let offending: Vec<usize> = check.offending.into_iter().filter(|&i| constant.get(i, i) > 0.0).collect();
    if offending.is_empty() {
        return Ok((ac, offending));
    }
    log::warn!("{} coarse conduction rows fall back to the constant basis", offending.len());
    let mut replace = vec![false; ac.nrows()];
    for &i in &offending {
        replace[i] = true;
    }
    let mut t: Vec<(usize, usize, f64)> = ac.triplets().filter(|(i, _, _)| !replace[*i]).collect();
    t.extend(constant.triplets().filter(|(i, _, _)| replace[*i]));
    Ok((SparseMatrix::from_triplets(ac.nrows(), ac.ncols(), &t), offending))
}

/// Per coarse cell, the sum of `fine` over its members.
pub fn restrict_sum(p: &Partition, fine: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.count()];
    for (j, &c) in p.labels().iter().enumerate() {
        out[c] += fine[j];
    }
    out
}

/// Per coarse cell, the `weights`-weighted mean of `fine`.
pub fn restrict_average(p: &Partition, weights: &[f64], fine: &[f64]) -> Vec<f64> {
    let mut num = vec![0.0; p.count()];
    let mut den = vec![0.0; p.count()];
    for (j, &c) in p.labels().iter().enumerate() {
        num[c] += weights[j] * fine[j];
        den[c] += weights[j];
    }
    num.iter().zip(&den).map(|(n, d)| n / d).collect()
}

/// Piecewise-constant injection `Rᵀ x`.
pub fn prolong_to_fine(p: &Partition, coarse: &[f64]) -> Vec<f64> {
    p.labels().iter().map(|&c| coarse[c]).collect()
}

/// Distributes extensive coarse energy over fine cells in proportion to
/// their capacity, i.e. `capacity * Rᵀ T_c`.
pub fn prolong_energy(p: &Partition, fine_capacity: &[f64], coarse_energy: &[f64]) -> Vec<f64> {
    let total = restrict_sum(p, fine_capacity);
    p.labels().iter().enumerate().map(|(j, &c)| fine_capacity[j] / total[c] * coarse_energy[c]).collect()
}

/// `‖a - b‖₂ / ‖b‖₂`
pub fn relative_l2(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = reference.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub const KELVIN_OFFSET: f64 = 273.15;

/// Zero of the cell energy `(ρc)_eff V (T - T₀)` used by the error norm.
///
/// The relative error depends on the datum: measured from 0 °C the same
/// absolute misfit weighs about 4.6 times more than from absolute zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyDatum {
    #[default]
    Absolute,
    Celsius,
}

impl EnergyDatum {
    /// Offset added to °C temperatures.
    pub fn offset(self) -> f64 {
        match self {
            EnergyDatum::Absolute => KELVIN_OFFSET,
            EnergyDatum::Celsius => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyDatum::Absolute => "kelvin",
            EnergyDatum::Celsius => "celsius",
        }
    }
}

/// Relative ℓ₂ error in cell energy between a fine reference and a coarse state.
pub fn energy_error(
    p: &Partition,
    fine_capacity: &[f64],
    fine_temperature: &[f64],
    coarse_temperature: &[f64],
    datum: EnergyDatum,
) -> f64 {
    let t0 = datum.offset();
    let reference: Vec<f64> = fine_capacity.iter().zip(fine_temperature).map(|(c, t)| c * (t + t0)).collect();
    let approx: Vec<f64> =
        prolong_to_fine(p, coarse_temperature).iter().zip(fine_capacity).map(|(t, c)| c * (t + t0)).collect();
    relative_l2(&approx, &reference)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSystem {
    pub advection: SparseMatrix,
    pub conduction: SparseMatrix,
    /// Sum of fine `(ρc)_eff V` over members.
    pub capacity: Vec<f64>,
    pub source: Vec<f64>,
    /// Producer rates per coarse cell (negative), used to weight production temperature.
    pub production: Vec<f64>,
    pub basis_mode: BasisMode,
    pub smoothing_iterations: usize,
    pub fallback_rows: Vec<usize>,
}

impl CoarseSystem {
    pub fn len(&self) -> usize {
        self.capacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacity.is_empty()
    }

    pub fn thermal(&self) -> Result<ThermalSystem> {
        ThermalSystem::new(self.advection.add(&self.conduction), self.capacity.clone(), self.source.clone())
    }

    pub fn production_temperature(&self, temperature: &[f64]) -> Option<f64> {
        crate::thermal::production_temperature(temperature, &self.production)
    }
}

/// Everything the coarse assembly needs from the fine model.
#[derive(Debug, Clone, Copy)]
pub struct FineModel<'a> {
    pub grid: &'a FineGrid,
    pub flux: &'a FluxField,
    pub props: &'a ThermalProps,
    /// Unscaled fine conduction operator.
    pub conduction: &'a SparseMatrix,
    pub inflow: Inflow,
}

pub fn assemble_coarse(
    fine: &FineModel,
    p: &Partition,
    basis: &BasisSet,
    upwinding: Upwinding,
) -> Result<CoarseSystem> {
    if basis.restriction != restriction_matrix(p) {
        return Err(Error::InvalidInput("basis was built for a different partition".into()));
    }
    let (advection, source) = coarse_advection(p, fine.grid, fine.flux, fine.props, fine.inflow, upwinding)?;
    let (conduction, fallback_rows) = coarse_conduction(fine.conduction, basis)?;
    let capacity = restrict_sum(p, &crate::thermal::cell_capacity(fine.props, fine.grid));
    let producers: Vec<f64> = fine.flux.sources.iter().map(|q| q.min(0.0)).collect();
    Ok(CoarseSystem {
        advection,
        conduction,
        capacity,
        source,
        production: restrict_sum(p, &producers),
        basis_mode: basis.mode,
        smoothing_iterations: basis.global_iterations,
        fallback_rows,
    })
}

/// Runs the coarse model from the volume-weighted average of `fine_initial`.
pub fn simulate_coarse(
    system: &CoarseSystem,
    p: &Partition,
    grid: &FineGrid,
    fine_initial: &[f64],
    schedule: Schedule,
    scheme: TimeScheme,
    observe: impl FnMut(&TransportState),
) -> Result<TransportState> {
    let initial = restrict_average(p, grid.measures(), fine_initial);
    simulate(&system.thermal()?, &initial, schedule, scheme, observe)
}
