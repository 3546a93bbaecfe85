//! Fine and coarse pipelines for a scenario.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use dfmheat::basis::{constant_basis, interaction_regions, smooth_basis, BasisSet};
use dfmheat::coarsen::{coarsen, coarsening_factor, compute_tof, transfer_partition, Partition};
use dfmheat::flow::{solve_flow, BoundaryConditions, FlowProps, FluxField, WellControl, WellLocation, WellSet};
use dfmheat::mesh::{build_cartesian_dfm, import_grid, rasterize_dfm, CartesianSpec, FineGrid, FractureNetwork};
use dfmheat::thermal::{
    assemble_conduction, assemble_fine, cell_capacity, production_temperature, Inflow, Stepper, ThermalProps,
    TimeScheme, TransportState,
};
use dfmheat::upscale::{assemble_coarse, energy_error, prolong_to_fine, restrict_average, EnergyDatum, FineModel};
use dfmheat::SECONDS_PER_YEAR;

use crate::output::{columns_to_rows, write_csv, write_vtk};
use crate::scenario::{BasisChoice, GridCfg, LocationCfg, NetworkSpec, Scenario, WellKind};
use crate::{CliError, Context};

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub fine_reference: Option<bool>,
    pub basis: Option<BasisChoice>,
    pub seed: Option<u64>,
    /// Worker threads for basis smoothing; all cores when absent.
    pub jobs: Option<usize>,
    /// Skip writing artifacts (the report is still returned).
    pub dry_write: bool,
}

/// Fine production temperature must fall this fraction of the injection
/// contrast below its initial value before breakthrough is declared.
pub const BREAKTHROUGH_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoarseRun {
    pub basis: String,
    pub iterations: usize,
    pub stop_reason: String,
    pub active_bases: usize,
    pub fallback_rows: usize,
    /// ε at the final time, absolute-zero and 0 °C energy datum.
    pub error_kelvin: Option<f64>,
    pub error_celsius: Option<f64>,
    pub production_final: Option<f64>,
    pub max_production_deviation_after_breakthrough: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub refinement: usize,
    pub fine_cells: usize,
    pub fracture_cells: usize,
    pub coarse_cells: usize,
    pub coarsening_factor: f64,
    pub fine_production_final: Option<f64>,
    pub breakthrough_years: Option<f64>,
    pub runs: Vec<CoarseRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub error_datum: String,
    pub levels: Vec<LevelReport>,
}

/// Output-time series of one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Series {
    pub time: Vec<f64>,
    pub fine_production: Vec<f64>,
    /// Per coarse run.
    pub production: Vec<Vec<f64>>,
    pub error_kelvin: Vec<Vec<f64>>,
    pub error_celsius: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub summary: Summary,
    pub series: Vec<Series>,
    pub out_dir: PathBuf,
}

impl Report {
    /// The headline ε of a run at a level, in the configured datum.
    pub fn error(&self, level: usize, basis: &str, datum: EnergyDatum) -> Option<f64> {
        let run = self.summary.levels.get(level)?.runs.iter().find(|r| r.basis == basis)?;
        match datum {
            EnergyDatum::Absolute => run.error_kelvin,
            EnergyDatum::Celsius => run.error_celsius,
        }
    }
}

pub fn build_grid(s: &Scenario, refinement: usize, net: &FractureNetwork) -> Result<FineGrid, CliError> {
    let domain = s.domain.rect();
    match &s.grid {
        GridCfg::Cartesian { nx, ny, intersections, .. } => {
            let spec = CartesianSpec::new(domain, nx * refinement, ny * refinement)
                .with_intersections((*intersections).into());
            build_cartesian_dfm(&spec, net).ctx("building the Cartesian grid")
        }
        GridCfg::Rasterized { nx, ny, .. } => {
            rasterize_dfm(&CartesianSpec::new(domain, nx * refinement, ny * refinement), net)
                .ctx("rasterizing the network")
        }
        GridCfg::Import { path } => {
            let f = File::open(path)
                .map_err(|e| CliError::Config(format!("grid.path: cannot open {}: {e}", path.display())))?;
            import_grid(std::io::BufReader::new(f)).map_err(|e| CliError::Config(format!("grid.path: {e}")))
        }
    }
}

pub fn wells(s: &Scenario) -> WellSet {
    let mut set = WellSet::default();
    for w in &s.wells {
        let location = match &w.location {
            LocationCfg::Point([x, y]) => WellLocation::Point([x.si(), y.si()]),
            LocationCfg::NearestFracture([x, y]) => WellLocation::NearestFracture([x.si(), y.si()]),
            LocationCfg::Cell(c) => WellLocation::Cell(*c),
            LocationCfg::FractureOutlets => WellLocation::FractureOutlets,
        };
        let rate = w.rate.si();
        let control = match w.kind {
            WellKind::Injector => WellControl::RateInjector { rate },
            WellKind::Producer => WellControl::RateProducer { rate },
        };
        set.push(&w.name, location, control);
    }
    set
}

pub fn solve_level_flow(s: &Scenario, grid: &FineGrid) -> Result<FluxField, CliError> {
    let fp = FlowProps::uniform(grid, s.materials.matrix_permeability.si(), s.materials.viscosity.si())
        .ctx("flow properties")?;
    let mut bc = BoundaryConditions::no_flow();
    for b in &s.boundary {
        bc = bc.with_pressure(&b.tag, b.pressure.si());
    }
    Ok(solve_flow(grid, &fp, &wells(s), &bc).ctx("solving the pressure equation")?.1)
}

pub fn thermal_props(s: &Scenario, grid: &FineGrid) -> Result<ThermalProps, CliError> {
    let m = &s.materials;
    ThermalProps::new(grid, m.rock_heat_capacity.si(), m.fluid_heat_capacity.si(), m.porosity, m.conductivity.si())
        .ctx("thermal properties")
}

/// Partition of the first refinement level.
pub fn base_partition(
    s: &Scenario,
    grid: &FineGrid,
    flux: &FluxField,
    props: &ThermalProps,
) -> Result<Partition, CliError> {
    coarsen(grid, Some(flux), &props.porosity, &s.coarsening.params()).ctx("coarsening")
}

fn steps_and_outputs(s: &Scenario) -> (usize, usize) {
    let dt = s.schedule.dt.si();
    let steps = (s.schedule.end.si() / dt).round().max(1.0) as usize;
    let every = s.schedule.output_interval.map(|o| (o.si() / dt).round().max(1.0) as usize).unwrap_or(1);
    (steps, every)
}

fn is_output(step: usize, steps: usize, every: usize) -> bool {
    step.is_multiple_of(every) || step == steps
}

struct CoarseCase {
    name: &'static str,
    basis: BasisSet,
    fallback_rows: usize,
    stepper: Stepper,
    production: Vec<f64>,
    state: TransportState,
}

fn breakthrough(time: &[f64], fine: &[f64], initial: f64, injection: f64) -> Option<usize> {
    let threshold = initial - BREAKTHROUGH_FRACTION * (initial - injection).abs();
    let _ = time;
    fine.iter().position(|t| *t <= threshold)
}

/// Runs all levels and writes artifacts.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<Report, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    pool.install(|| run_inner(s, opts))
}

pub fn output_dir(s: &Scenario, opts: &RunOptions) -> PathBuf {
    opts.out_dir.clone().or_else(|| s.output.dir.clone()).unwrap_or_else(|| Path::new("out").join(&s.name))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Output { path: path.into(), source: e })
}

fn run_inner(s: &Scenario, opts: &RunOptions) -> Result<Report, CliError> {
    let seed = opts.seed.unwrap_or(s.seed);
    let choice = opts.basis.unwrap_or(s.basis.mode);
    let fine_ref = opts.fine_reference.unwrap_or(s.output.fine_reference);
    let out_dir = output_dir(s, opts);
    let write = !opts.dry_write;
    if write {
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Output { path: out_dir.clone(), source: e })?;
    }
    let net = s.network(seed)?;
    let t_init = s.temperatures.initial.si();
    let t_inj = s.temperatures.injection.si();
    let inflow = Inflow { injection: t_inj, boundary: s.temperatures.boundary.map_or(t_inj, |t| t.si()) };
    let scheme: TimeScheme = s.schedule.scheme.into();
    let dt = s.schedule.dt.si();
    let (steps, every) = steps_and_outputs(s);

    let mut levels = Vec::new();
    let mut all_series = Vec::new();
    let mut base: Option<(FineGrid, Partition)> = None;
    for (level, &refinement) in s.grid.refinements().iter().enumerate() {
        let grid = build_grid(s, refinement, &net)?;
        let flux = solve_level_flow(s, &grid)?;
        let props = thermal_props(s, &grid)?;
        let partition = match &base {
            None => base_partition(s, &grid, &flux, &props)?,
            Some((g0, p0)) => transfer_partition(g0, p0, &grid).ctx("transferring the partition")?,
        };
        partition.validate(&grid).ctx("partition check")?;
        info!(
            "level {level}: {} fine cells ({} fracture), {} coarse cells",
            grid.cell_count(),
            grid.fracture_cell_count(),
            partition.count()
        );
        let conduction = assemble_conduction(&grid, &props).ctx("fine conduction")?;
        let model = FineModel { grid: &grid, flux: &flux, props: &props, conduction: &conduction, inflow };
        let mut cases = Vec::new();
        let mut add_case = |name: &'static str, basis: BasisSet| -> Result<(), CliError> {
            let cs = assemble_coarse(&model, &partition, &basis, s.basis.upwinding()).ctx("coarse assembly")?;
            let stepper = Stepper::new(&cs.thermal().ctx("coarse system")?, dt, scheme).ctx("coarse factorization")?;
            let init = restrict_average(&partition, grid.measures(), &vec![t_init; grid.cell_count()]);
            cases.push(CoarseCase {
                name,
                fallback_rows: cs.fallback_rows.len(),
                basis,
                stepper,
                production: cs.production.clone(),
                state: TransportState::initial(init),
            });
            Ok(())
        };
        if choice.constant() {
            add_case("constant", constant_basis(&partition))?;
        }
        if choice.smoothed() {
            let regions = interaction_regions(&partition, &grid, s.basis.region_mode());
            let controls = s.basis.controls(level);
            let b = smooth_basis(&conduction, &partition, &regions, &controls).ctx("basis smoothing")?;
            info!(
                "smoothing: {} iterations, stop {}, {} of {} bases active",
                b.global_iterations,
                b.stop_reason.as_str(),
                b.active_count(),
                b.coarse_count()
            );
            add_case("smoothed", b)?;
        }

        let cap = cell_capacity(&props, &grid);
        let mut fine = if fine_ref {
            let sys = assemble_fine(&grid, &flux, &props, inflow).ctx("fine assembly")?;
            Some((
                Stepper::new(&sys, dt, scheme).ctx("fine factorization")?,
                TransportState::initial(vec![t_init; grid.cell_count()]),
            ))
        } else {
            None
        };
        let mut series = Series {
            production: vec![Vec::new(); cases.len()],
            error_kelvin: vec![Vec::new(); cases.len()],
            error_celsius: vec![Vec::new(); cases.len()],
            ..Default::default()
        };
        for step in 1..=steps {
            if let Some((stepper, state)) = fine.as_mut() {
                *state = stepper.step(state).ctx("fine time step")?;
            }
            for c in cases.iter_mut() {
                c.state = c.stepper.step(&c.state).ctx("coarse time step")?;
            }
            if !is_output(step, steps, every) {
                continue;
            }
            series.time.push(step as f64 * dt);
            if let Some((_, state)) = &fine {
                series
                    .fine_production
                    .push(production_temperature(&state.temperature, &flux.sources).unwrap_or(f64::NAN));
            }
            for (k, c) in cases.iter().enumerate() {
                series.production[k]
                    .push(production_temperature(&c.state.temperature, &c.production).unwrap_or(f64::NAN));
                if let Some((_, state)) = &fine {
                    let e = |d| energy_error(&partition, &cap, &state.temperature, &c.state.temperature, d);
                    series.error_kelvin[k].push(e(EnergyDatum::Absolute));
                    series.error_celsius[k].push(e(EnergyDatum::Celsius));
                }
            }
        }

        let bt = fine.as_ref().and_then(|_| breakthrough(&series.time, &series.fine_production, t_init, t_inj));
        let finite = |v: Option<&f64>| v.copied().filter(|x| x.is_finite());
        let runs = cases
            .iter()
            .enumerate()
            .map(|(k, c)| CoarseRun {
                basis: c.name.into(),
                iterations: c.basis.global_iterations,
                stop_reason: c.basis.stop_reason.as_str().into(),
                active_bases: c.basis.active_count(),
                fallback_rows: c.fallback_rows,
                error_kelvin: series.error_kelvin[k].last().copied(),
                error_celsius: series.error_celsius[k].last().copied(),
                production_final: finite(series.production[k].last()),
                max_production_deviation_after_breakthrough: bt.map(|i| {
                    series.fine_production[i..]
                        .iter()
                        .zip(&series.production[k][i..])
                        .map(|(f, c)| (f - c).abs())
                        .fold(0.0, f64::max)
                }),
            })
            .collect();
        let report = LevelReport {
            refinement,
            fine_cells: grid.cell_count(),
            fracture_cells: grid.fracture_cell_count(),
            coarse_cells: partition.count(),
            coarsening_factor: coarsening_factor(grid.cell_count(), partition.count()),
            fine_production_final: finite(series.fine_production.last()),
            breakthrough_years: bt.map(|i| series.time[i] / SECONDS_PER_YEAR),
            runs,
        };

        if write {
            let dir = out_dir.join(format!("level_{level}"));
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Output { path: dir.clone(), source: e })?;
            write_level(s, &dir, &grid, &flux, &props, &partition, &cases, fine.as_ref().map(|f| &f.1), &series)?;
        }
        levels.push(report);
        all_series.push(series);
        if base.is_none() {
            base = Some((grid, partition));
        }
    }

    let summary = Summary {
        scenario: s.name.clone(),
        seed,
        error_datum: EnergyDatum::from(s.basis.error_datum).as_str().into(),
        levels,
    };
    if write {
        let path = out_dir.join("summary.json");
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &summary)
            .map_err(|e| CliError::Output { path: path.clone(), source: e.into() })?;
        use std::io::Write;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Output { path, source: e })?;
        if s.output.csv {
            write_table(&summary, s.basis.error_datum.into(), &out_dir.join("table.csv"))?;
        }
    }
    Ok(Report { summary, series: all_series, out_dir })
}

/// One row per level: CF and the final ε of each basis, NaN where absent.
fn write_table(summary: &Summary, datum: EnergyDatum, path: &Path) -> Result<(), CliError> {
    let header =
        ["refinement", "fine_cells", "coarse_cells", "coarsening_factor", "epsilon_constant", "epsilon_smoothed"];
    let rows: Vec<Vec<f64>> = summary
        .levels
        .iter()
        .map(|l| {
            let eps = |b: &str| {
                l.runs
                    .iter()
                    .find(|r| r.basis == b)
                    .and_then(|r| match datum {
                        EnergyDatum::Absolute => r.error_kelvin,
                        EnergyDatum::Celsius => r.error_celsius,
                    })
                    .unwrap_or(f64::NAN)
            };
            vec![
                l.refinement as f64,
                l.fine_cells as f64,
                l.coarse_cells as f64,
                l.coarsening_factor,
                eps("constant"),
                eps("smoothed"),
            ]
        })
        .collect();
    write_csv(create(path)?, &header, &rows)
}

#[allow(clippy::too_many_arguments)]
fn write_level(
    s: &Scenario,
    dir: &Path,
    grid: &FineGrid,
    flux: &FluxField,
    props: &ThermalProps,
    partition: &Partition,
    cases: &[CoarseCase],
    fine: Option<&TransportState>,
    series: &Series,
) -> Result<(), CliError> {
    if s.output.partition {
        let path = dir.join("partition.txt");
        let mut w = create(&path)?;
        partition.write_labels(&mut w).ctx("writing partition labels")?;
    }
    if s.output.basis {
        if let Some(c) = cases.iter().find(|c| c.name == "smoothed") {
            let mut w = create(&dir.join("basis_smoothed.txt"))?;
            c.basis.write_triplets(&mut w).ctx("writing basis triplets")?;
        }
    }
    if s.output.csv {
        let years: Vec<f64> = series.time.iter().map(|t| t / SECONDS_PER_YEAR).collect();
        let mut header = vec!["time_years".to_string()];
        let mut cols: Vec<&[f64]> = vec![&years];
        if fine.is_some() {
            header.push("T_production_fine_C".into());
            cols.push(&series.fine_production);
        }
        for (k, c) in cases.iter().enumerate() {
            header.push(format!("T_production_{}_C", c.name));
            cols.push(&series.production[k]);
            if fine.is_some() {
                header.push(format!("epsilon_{}_kelvin", c.name));
                cols.push(&series.error_kelvin[k]);
                header.push(format!("epsilon_{}_celsius", c.name));
                cols.push(&series.error_celsius[k]);
            }
        }
        let header: Vec<&str> = header.iter().map(|h| h.as_str()).collect();
        write_csv(create(&dir.join("series.csv"))?, &header, &columns_to_rows(&cols))?;
    }
    if s.output.vtk {
        let kinds: Vec<f64> = grid.kinds().iter().map(|k| *k as u8 as f64).collect();
        let labels: Vec<f64> = partition.labels().iter().map(|&l| l as f64).collect();
        let tof = compute_tof(grid, flux, &props.porosity).ctx("time of flight")?;
        let tof_years: Vec<f64> = tof.iter().map(|t| t / SECONDS_PER_YEAR).collect();
        let coarse: Vec<Vec<f64>> = cases.iter().map(|c| prolong_to_fine(partition, &c.state.temperature)).collect();
        let names: Vec<String> = cases.iter().map(|c| format!("temperature_{}", c.name)).collect();
        let mut fields: Vec<(&str, &[f64])> =
            vec![("cell_kind", &kinds), ("partition", &labels), ("tof_years", &tof_years)];
        if let Some(f) = fine {
            fields.push(("temperature_fine", &f.temperature));
        }
        for (name, t) in names.iter().zip(&coarse) {
            fields.push((name, t));
        }
        write_vtk(create(&dir.join("fields.vtk"))?, &s.name, grid, &fields)?;
    }
    Ok(())
}

/// Resolved configuration, printed by `--dry-run`.
#[derive(Debug, Clone, Serialize)]
pub struct Plan {
    pub scenario: String,
    pub seed: u64,
    pub fractures: usize,
    pub levels: Vec<PlannedLevel>,
    pub wells: Vec<String>,
    pub time_steps: usize,
    pub output_every_steps: usize,
    pub dt_seconds: f64,
    pub basis: String,
    pub fine_reference: bool,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlannedLevel {
    pub refinement: usize,
    pub grid: String,
    pub smoothing_iterations: usize,
}

pub fn plan(s: &Scenario, opts: &RunOptions) -> Result<Plan, CliError> {
    let seed = opts.seed.unwrap_or(s.seed);
    let net = s.network(seed)?;
    let (steps, every) = steps_and_outputs(s);
    let choice = opts.basis.unwrap_or(s.basis.mode);
    let levels = s
        .grid
        .refinements()
        .iter()
        .enumerate()
        .map(|(level, &f)| PlannedLevel {
            refinement: f,
            grid: match &s.grid {
                GridCfg::Cartesian { nx, ny, .. } => format!("cartesian {}x{}", nx * f, ny * f),
                GridCfg::Rasterized { nx, ny, .. } => format!("rasterized {}x{}", nx * f, ny * f),
                GridCfg::Import { path } => format!("import {}", path.display()),
            },
            smoothing_iterations: if choice.smoothed() { s.basis.max_iterations.for_level(level) } else { 0 },
        })
        .collect();
    Ok(Plan {
        scenario: s.name.clone(),
        seed,
        fractures: net.segments().len(),
        levels,
        wells: s.wells.iter().map(|w| format!("{} ({:?}, {})", w.name, w.kind, w.rate)).collect(),
        time_steps: steps,
        output_every_steps: every,
        dt_seconds: s.schedule.dt.si(),
        basis: format!("{choice:?}").to_lowercase(),
        fine_reference: opts.fine_reference.unwrap_or(s.output.fine_reference),
        output_dir: output_dir(s, opts),
    })
}

/// `gen-network`: writes the generated segments in the network file format.
pub fn gen_network(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", spec_path.display())))?;
    let net = NetworkSpec::from_toml(&text)?.generate(seed)?;
    info!("{} fractures", net.segments().len());
    let mut w = create(out)?;
    net.write(&mut w).ctx("writing the network")?;
    Ok(())
}

/// `coarsen`: partition of the first refinement level as one label per line.
pub fn coarsen_cmd(config: &Path, out: &Path) -> Result<(), CliError> {
    let s = Scenario::load(config)?;
    let net = s.network(s.seed)?;
    let level = s.grid.refinements()[0];
    let grid = build_grid(&s, level, &net)?;
    let flux = solve_level_flow(&s, &grid)?;
    let props = thermal_props(&s, &grid)?;
    let p = base_partition(&s, &grid, &flux, &props)?;
    info!(
        "{} fine cells into {} coarse cells (factor {:.1})",
        grid.cell_count(),
        p.count(),
        coarsening_factor(grid.cell_count(), p.count())
    );
    let mut w = create(out)?;
    p.write_labels(&mut w).ctx("writing partition labels")?;
    Ok(())
}
