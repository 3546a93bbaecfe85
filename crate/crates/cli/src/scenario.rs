//! TOML scenario files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dfmheat::basis::{FreezeMode, RegionMode, SmoothingControls};
use dfmheat::coarsen::{geometric_widths, BinScale, CoarsenParams};
use dfmheat::fracgen::{ApertureRule, GenSpec, LengthDistribution, Orientation};
use dfmheat::geometry::Rect;
use dfmheat::mesh::{FractureNetwork, IntersectionMode, Segment};
use dfmheat::thermal::TimeScheme;
use dfmheat::upscale::{EnergyDatum, Upwinding};

use crate::units::*;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Seed for the stochastic network generator.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainCfg,
    pub grid: GridCfg,
    #[serde(default)]
    pub fractures: FracturesCfg,
    #[serde(default)]
    pub materials: Materials,
    #[serde(default)]
    pub temperatures: Temperatures,
    pub wells: Vec<WellCfg>,
    /// Fixed pressures on the tagged outer boundary (`xmin`, `xmax`, `ymin`, `ymax`).
    #[serde(default)]
    pub boundary: Vec<PressureBc>,
    pub schedule: ScheduleCfg,
    #[serde(default)]
    pub coarsening: CoarseningCfg,
    #[serde(default)]
    pub basis: BasisCfg,
    #[serde(default)]
    pub output: OutputCfg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainCfg {
    pub width: Length,
    pub height: Length,
}

impl Default for DomainCfg {
    fn default() -> Self {
        Self { width: Length(1000.0), height: Length(1000.0) }
    }
}

impl DomainCfg {
    pub fn rect(&self) -> Rect {
        Rect::from_size(self.width.si(), self.height.si())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntersectionCfg {
    #[default]
    StarDelta,
    Retained,
}

impl From<IntersectionCfg> for IntersectionMode {
    fn from(c: IntersectionCfg) -> Self {
        match c {
            IntersectionCfg::StarDelta => IntersectionMode::StarDelta,
            IntersectionCfg::Retained => IntersectionMode::Retained,
        }
    }
}

fn base_level() -> Vec<usize> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridCfg {
    /// Fractures must lie on grid lines.
    Cartesian {
        nx: usize,
        ny: usize,
        #[serde(default)]
        intersections: IntersectionCfg,
        /// Refinement factors; the coarse partition is built on the first.
        #[serde(default = "base_level")]
        refinements: Vec<usize>,
    },
    /// Arbitrary fractures snapped onto grid edges.
    Rasterized {
        nx: usize,
        ny: usize,
        #[serde(default = "base_level")]
        refinements: Vec<usize>,
    },
    /// A grid in the text exchange format.
    Import { path: PathBuf },
}

impl GridCfg {
    pub fn refinements(&self) -> Vec<usize> {
        match self {
            GridCfg::Cartesian { refinements, .. } | GridCfg::Rasterized { refinements, .. } => refinements.clone(),
            GridCfg::Import { .. } => vec![1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentCfg {
    pub from: [Length; 2],
    pub to: [Length; 2],
    pub aperture: Length,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FracturesCfg {
    #[serde(default)]
    pub segments: Vec<SegmentCfg>,
    /// Network file with rows `x1 y1 x2 y2 aperture` in metres.
    pub file: Option<PathBuf>,
    pub generator: Option<GeneratorCfg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LengthsCfg {
    PowerLaw { exponent: f64, min: Length, max: Length },
    Fixed { length: Length },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OrientationCfg {
    Uniform,
    Sets { angles: Vec<Angle>, jitter: Angle },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ApertureCfg {
    Fixed {
        aperture: Length,
    },
    /// Aperture = factor × length.
    Proportional {
        factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorCfg {
    pub count: usize,
    pub lengths: LengthsCfg,
    pub orientation: OrientationCfg,
    pub aperture: ApertureCfg,
}

impl GeneratorCfg {
    pub fn spec(&self, domain: Rect, seed: u64, deterministic: Vec<Segment>) -> GenSpec {
        GenSpec {
            seed,
            count: self.count,
            lengths: match &self.lengths {
                LengthsCfg::PowerLaw { exponent, min, max } => {
                    LengthDistribution::PowerLaw { exponent: *exponent, min: min.si(), max: max.si() }
                }
                LengthsCfg::Fixed { length } => LengthDistribution::Fixed(length.si()),
            },
            orientation: match &self.orientation {
                OrientationCfg::Uniform => Orientation::Uniform,
                OrientationCfg::Sets { angles, jitter } => {
                    Orientation::Sets { angles: angles.iter().map(|a| a.si()).collect(), jitter: jitter.si() }
                }
            },
            aperture: match self.aperture {
                ApertureCfg::Fixed { aperture } => ApertureRule::Fixed(aperture.si()),
                ApertureCfg::Proportional { factor } => ApertureRule::LengthProportional(factor),
            },
            deterministic,
            domain,
        }
    }
}

impl SegmentCfg {
    pub fn segment(&self) -> Segment {
        Segment::new([self.from[0].si(), self.from[1].si()], [self.to[0].si(), self.to[1].si()], self.aperture.si())
    }
}

/// Input of `gen-network`: a domain, optional fixed segments and a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainCfg,
    #[serde(default)]
    pub segments: Vec<SegmentCfg>,
    pub generator: GeneratorCfg,
}

impl NetworkSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        parse_toml(text)
    }

    pub fn generate(&self, seed: Option<u64>) -> Result<FractureNetwork, CliError> {
        let det = self.segments.iter().map(SegmentCfg::segment).collect();
        let spec = self.generator.spec(self.domain.rect(), seed.unwrap_or(self.seed), det);
        dfmheat::fracgen::generate(&spec).map_err(|e| invalid("generator", e))
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner().message()))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Materials {
    pub rock_heat_capacity: HeatCapacity,
    pub fluid_heat_capacity: HeatCapacity,
    pub conductivity: Conductivity,
    pub viscosity: Viscosity,
    pub porosity: f64,
    pub matrix_permeability: Permeability,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            rock_heat_capacity: HeatCapacity(2.17e6),
            fluid_heat_capacity: HeatCapacity(4.18e6),
            conductivity: Conductivity(2.1),
            viscosity: Viscosity(1e-3),
            porosity: 1e-3,
            matrix_permeability: Permeability(9.869_233e-12),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Temperatures {
    pub initial: Temperature,
    pub injection: Temperature,
    /// Temperature of fluid entering through pressure boundaries; defaults to `injection`.
    pub boundary: Option<Temperature>,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self { initial: Temperature(100.0), injection: Temperature(20.0), boundary: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WellKind {
    Injector,
    Producer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationCfg {
    Point([Length; 2]),
    NearestFracture([Length; 2]),
    Cell(usize),
    FractureOutlets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellCfg {
    pub name: String,
    pub kind: WellKind,
    pub rate: AreaRate,
    pub location: LocationCfg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureBc {
    pub tag: String,
    pub pressure: Pressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeCfg {
    #[default]
    Bdf2,
    ImplicitEuler,
}

impl From<SchemeCfg> for TimeScheme {
    fn from(c: SchemeCfg) -> Self {
        match c {
            SchemeCfg::Bdf2 => TimeScheme::Bdf2,
            SchemeCfg::ImplicitEuler => TimeScheme::ImplicitEuler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleCfg {
    pub dt: Time,
    pub end: Time,
    #[serde(default)]
    pub scheme: SchemeCfg,
    /// Spacing of recorded outputs; every step when absent.
    pub output_interval: Option<Time>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinScaleCfg {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistanceCfg {
    Geometric { first: Length, ratio: f64, count: usize },
    Widths { widths: Vec<Length> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarseningCfg {
    /// Time-of-flight bins; 0 disables the flow indicator.
    pub tof_bins: usize,
    #[serde(default)]
    pub tof_scale: BinScaleCfg,
    pub distance: Option<DistanceCfg>,
    /// Uniform `[nx, ny]` boxes intersected with the indicators.
    pub boxes: Option<[usize; 2]>,
    pub merge_below: usize,
    #[serde(default)]
    pub fine_fractures: bool,
}

impl Default for CoarseningCfg {
    fn default() -> Self {
        Self {
            tof_bins: 6,
            tof_scale: BinScaleCfg::Log,
            distance: None,
            boxes: None,
            merge_below: 4,
            fine_fractures: false,
        }
    }
}

impl CoarseningCfg {
    pub fn params(&self) -> CoarsenParams {
        CoarsenParams {
            tof_bins: (self.tof_bins > 0).then_some(self.tof_bins),
            tof_scale: match self.tof_scale {
                BinScaleCfg::Log => BinScale::Log10,
                BinScaleCfg::Linear => BinScale::Linear,
            },
            distance_widths: self.distance.as_ref().map(|d| match d {
                DistanceCfg::Geometric { first, ratio, count } => geometric_widths(first.si(), *ratio, *count),
                DistanceCfg::Widths { widths } => widths.iter().map(|w| w.si()).collect(),
            }),
            boxes: self.boxes.map(|[nx, ny]| (nx, ny)),
            merge_below: self.merge_below,
            fine_fractures: self.fine_fractures,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisChoice {
    Constant,
    Smoothed,
    #[default]
    Both,
}

impl BasisChoice {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(BasisChoice::Constant),
            "smoothed" => Ok(BasisChoice::Smoothed),
            "both" => Ok(BasisChoice::Both),
            _ => Err(format!("unknown basis {s:?}, expected constant, smoothed or both")),
        }
    }

    pub fn constant(self) -> bool {
        self != BasisChoice::Smoothed
    }

    pub fn smoothed(self) -> bool {
        self != BasisChoice::Constant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Iterations {
    All(usize),
    PerLevel(Vec<usize>),
}

impl Iterations {
    pub fn for_level(&self, level: usize) -> usize {
        match self {
            Iterations::All(n) => *n,
            Iterations::PerLevel(v) => v.get(level).or(v.last()).copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionCfg {
    #[default]
    Vertex,
    VertexWithFractures,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeCfg {
    #[default]
    AllBases,
    OwnBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpwindingCfg {
    #[default]
    NetFlux,
    PerFace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatumCfg {
    #[default]
    Kelvin,
    Celsius,
}

impl From<DatumCfg> for EnergyDatum {
    fn from(d: DatumCfg) -> Self {
        match d {
            DatumCfg::Kelvin => EnergyDatum::Absolute,
            DatumCfg::Celsius => EnergyDatum::Celsius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisCfg {
    pub mode: BasisChoice,
    pub omega: f64,
    /// One count for all levels, or one per refinement level.
    pub max_iterations: Iterations,
    pub tolerance: f64,
    pub energy_termination: bool,
    pub diagonal_check: bool,
    pub clamp_negative: bool,
    pub freeze: FreezeCfg,
    pub regions: RegionCfg,
    pub upwinding: UpwindingCfg,
    /// Datum used for the headline error; both are always written.
    pub error_datum: DatumCfg,
}

impl Default for BasisCfg {
    fn default() -> Self {
        let c = SmoothingControls::default();
        Self {
            mode: BasisChoice::Both,
            omega: c.omega,
            max_iterations: Iterations::All(c.max_iterations),
            tolerance: c.tolerance,
            energy_termination: c.energy_termination,
            diagonal_check: c.diagonal_check,
            clamp_negative: c.clamp_negative,
            freeze: FreezeCfg::AllBases,
            regions: RegionCfg::Vertex,
            upwinding: UpwindingCfg::NetFlux,
            error_datum: DatumCfg::Kelvin,
        }
    }
}

impl BasisCfg {
    pub fn controls(&self, level: usize) -> SmoothingControls {
        SmoothingControls {
            omega: self.omega,
            max_iterations: self.max_iterations.for_level(level),
            tolerance: self.tolerance,
            clamp_negative: self.clamp_negative,
            energy_termination: self.energy_termination,
            freeze: match self.freeze {
                FreezeCfg::AllBases => FreezeMode::AllBases,
                FreezeCfg::OwnBasis => FreezeMode::OwnBasis,
            },
            diagonal_check: self.diagonal_check,
        }
    }

    pub fn region_mode(&self) -> RegionMode {
        match self.regions {
            RegionCfg::Vertex => RegionMode::Vertex,
            RegionCfg::VertexWithFractures => RegionMode::VertexWithFractures,
            RegionCfg::Global => RegionMode::Global,
        }
    }

    pub fn upwinding(&self) -> Upwinding {
        match self.upwinding {
            UpwindingCfg::NetFlux => Upwinding::NetFlux,
            UpwindingCfg::PerFace => Upwinding::PerFace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputCfg {
    /// Defaults to `out/<name>` next to the working directory.
    pub dir: Option<PathBuf>,
    pub fine_reference: bool,
    pub vtk: bool,
    pub csv: bool,
    pub partition: bool,
    /// Prolongation triplets of the smoothed basis.
    pub basis: bool,
}

impl Default for OutputCfg {
    fn default() -> Self {
        Self { dir: None, fine_reference: true, vtk: true, csv: true, partition: true, basis: false }
    }
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl Scenario {
    /// Parses TOML. Errors carry the offending field path.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let s: Scenario = parse_toml(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = s.fractures.file.as_mut() {
            rebase(f);
        }
        if let GridCfg::Import { path } = &mut s.grid {
            rebase(path);
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(path, format!("must be positive, got {v}")))
            }
        };
        positive("domain.width", self.domain.width.si())?;
        positive("domain.height", self.domain.height.si())?;
        match &self.grid {
            GridCfg::Cartesian { nx, ny, refinements, .. } | GridCfg::Rasterized { nx, ny, refinements } => {
                if *nx == 0 || *ny == 0 {
                    return Err(invalid("grid", "nx and ny must be positive"));
                }
                if refinements.is_empty() || refinements.contains(&0) {
                    return Err(invalid("grid.refinements", "needs positive factors"));
                }
            }
            GridCfg::Import { .. } => {}
        }
        for (i, seg) in self.fractures.segments.iter().enumerate() {
            positive(&format!("fractures.segments[{i}].aperture"), seg.aperture.si())?;
        }
        let m = &self.materials;
        positive("materials.rock_heat_capacity", m.rock_heat_capacity.si())?;
        positive("materials.fluid_heat_capacity", m.fluid_heat_capacity.si())?;
        positive("materials.conductivity", m.conductivity.si())?;
        positive("materials.viscosity", m.viscosity.si())?;
        positive("materials.matrix_permeability", m.matrix_permeability.si())?;
        if !(m.porosity > 0.0 && m.porosity <= 1.0) {
            return Err(invalid("materials.porosity", format!("must lie in (0, 1], got {}", m.porosity)));
        }
        if self.wells.is_empty() {
            return Err(invalid("wells", "at least one well is required"));
        }
        for (i, w) in self.wells.iter().enumerate() {
            if !(w.rate.si() >= 0.0) {
                return Err(invalid(&format!("wells[{i}].rate"), "must be non-negative"));
            }
        }
        positive("schedule.dt", self.schedule.dt.si())?;
        positive("schedule.end", self.schedule.end.si())?;
        if self.schedule.dt.si() > self.schedule.end.si() {
            return Err(invalid("schedule.dt", "exceeds schedule.end"));
        }
        if let Some(o) = self.schedule.output_interval {
            positive("schedule.output_interval", o.si())?;
        }
        let b = &self.basis;
        if !(b.omega > 0.0 && b.omega <= 1.0) {
            return Err(invalid("basis.omega", format!("must lie in (0, 1], got {}", b.omega)));
        }
        if !(b.tolerance >= 0.0) {
            return Err(invalid("basis.tolerance", "must be non-negative"));
        }
        if let Some(DistanceCfg::Geometric { first, ratio, .. }) = &self.coarsening.distance {
            positive("coarsening.distance.first", first.si())?;
            positive("coarsening.distance.ratio", *ratio)?;
        }
        if let Some(g) = &self.fractures.generator {
            self.gen_spec(g, 0, Vec::new()).validate().map_err(|e| invalid("fractures.generator", e))?;
        }
        Ok(())
    }

    fn gen_spec(&self, g: &GeneratorCfg, seed: u64, deterministic: Vec<Segment>) -> GenSpec {
        g.spec(self.domain.rect(), seed, deterministic)
    }

    /// Listed segments, then the network file, then generated fractures.
    pub fn network(&self, seed: u64) -> Result<FractureNetwork, CliError> {
        let mut segs: Vec<Segment> = self.fractures.segments.iter().map(SegmentCfg::segment).collect();
        if let Some(path) = &self.fractures.file {
            let f = std::fs::File::open(path)
                .map_err(|e| CliError::Config(format!("fractures.file: cannot open {}: {e}", path.display())))?;
            let net = FractureNetwork::read(std::io::BufReader::new(f)).map_err(|e| invalid("fractures.file", e))?;
            segs.extend_from_slice(net.segments());
        }
        match &self.fractures.generator {
            Some(g) => {
                dfmheat::fracgen::generate(&self.gen_spec(g, seed, segs)).map_err(|e| invalid("fractures.generator", e))
            }
            None => FractureNetwork::new(segs).map_err(|e| invalid("fractures", e)),
        }
    }
}
