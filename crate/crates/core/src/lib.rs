//! Heat transport in two-dimensional discrete fracture-matrix (DFM) models.
//!
//! The crate covers the whole upscaling pipeline:
//!
//! * [`mesh`]: Cartesian DFM grids with co-dimension one fracture cells and
//!   hybrid (star-delta) intersections, plus a text import/export format.
//! * [`flow`]: incompressible single-phase pressure with two-point fluxes.
//! * [`thermal`]: fine-scale advection-conduction operators, BDF2 stepping and
//!   Péclet diagnostics.
//! * [`coarsen`]: time-of-flight and fracture-distance indicators and the
//!   partition pipeline that turns them into a coarse grid.
//! * [`basis`]: restriction/prolongation operators, interaction regions and
//!   energy-limited Jacobi smoothing of the prolongation.
//! * [`upscale`]: coarse advection from aggregated fine fluxes, coarse
//!   conduction from `R A P`, coarse simulation and energy error.
//! * [`fracgen`]: a seedable stochastic fracture network generator.
//!
//! All quantities are SI and per unit depth. Temperatures are carried in °C.

// `!(x > 0.0)` deliberately rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod coarsen;
pub mod error;
pub mod flow;
pub mod fracgen;
pub mod geometry;
pub mod mesh;
pub mod sparse;
pub mod thermal;
pub mod upscale;

pub use error::{Error, Result};

/// Seconds per (Julian) year.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;
