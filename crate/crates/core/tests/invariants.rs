//! Randomized invariants over small stochastic networks.

use dfmheat::basis::{
    check_diagonal_positivity, constant_basis, interaction_regions, smooth_basis, BasisSet, FreezeMode, RegionMode,
    SmoothingControls,
};
use dfmheat::coarsen::{coarsen, geometric_widths, CoarsenParams, Partition};
use dfmheat::flow::{solve_flow, BoundaryConditions, FlowProps, FluxField, WellControl, WellLocation, WellSet};
use dfmheat::fracgen::{generate, ApertureRule, GenSpec, LengthDistribution, Orientation};
use dfmheat::geometry::Rect;
use dfmheat::mesh::{rasterize_dfm, CartesianSpec, FineGrid, Segment};
use dfmheat::thermal::{assemble_conduction, assemble_fine, simulate, Inflow, Schedule, ThermalProps, TimeScheme};
use dfmheat::upscale::{assemble_coarse, FineModel, Upwinding};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: f64 = 400.0;
const N: usize = 24;

struct Case {
    grid: FineGrid,
    flux: FluxField,
    props: ThermalProps,
    partition: Partition,
}

fn network_grid(seed: u64) -> FineGrid {
    let domain = Rect::from_size(L, L);
    let spec = GenSpec {
        seed,
        count: 8,
        lengths: LengthDistribution::PowerLaw { exponent: 2.0, min: 40.0, max: 300.0 },
        orientation: Orientation::Uniform,
        aperture: ApertureRule::LengthProportional(1e-4),
        deterministic: vec![Segment::new([20.0, 30.0], [380.0, 370.0], 0.02)],
        domain,
    };
    rasterize_dfm(&CartesianSpec::new(domain, N, N), &generate(&spec).unwrap()).unwrap()
}

fn case(seed: u64) -> Case {
    let grid = network_grid(seed);
    let fp = FlowProps::uniform(&grid, 1e-12, 1e-3).unwrap();
    let mut wells = WellSet::default();
    let rate = 1e-4;
    wells.push("inj", WellLocation::NearestFracture([20.0, 30.0]), WellControl::RateInjector { rate });
    wells.push("prod", WellLocation::NearestFracture([380.0, 370.0]), WellControl::RateProducer { rate });
    let (_, flux) = solve_flow(&grid, &fp, &wells, &BoundaryConditions::no_flow()).unwrap();
    let props = ThermalProps::new(&grid, 2.17e6, 4.18e6, 0.001, 2.1).unwrap();
    let params = CoarsenParams {
        tof_bins: Some(3),
        distance_widths: Some(geometric_widths(L / N as f64, 2.0, 2)),
        boxes: Some((4, 4)),
        ..Default::default()
    };
    let partition = coarsen(&grid, Some(&flux), &props.porosity, &params).unwrap();
    Case { grid, flux, props, partition }
}

fn smoothed(c: &Case, iterations: usize, freeze: FreezeMode) -> BasisSet {
    let a = assemble_conduction(&c.grid, &c.props).unwrap();
    let regions = interaction_regions(&c.partition, &c.grid, RegionMode::Vertex);
    let controls = SmoothingControls { max_iterations: iterations, tolerance: 0.0, freeze, ..Default::default() };
    smooth_basis(&a, &c.partition, &regions, &controls).unwrap()
}

fn random_temperatures(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(20.0..100.0)).collect()
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 25, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn partitions_are_valid(seed in any::<u64>()) {
        let c = case(seed);
        prop_assert!(c.partition.validate(&c.grid).is_ok());
        prop_assert!(c.partition.count() < c.grid.cell_count());
    }

    #[test]
    fn smoothing_keeps_unity_and_lowers_energy(seed in any::<u64>(), own in any::<bool>()) {
        let c = case(seed);
        let freeze = if own { FreezeMode::OwnBasis } else { FreezeMode::AllBases };
        let b = smoothed(&c, 40, freeze);
        prop_assert!(b.max_unity_error < 1e-12, "unity defect {}", b.max_unity_error);
        for hist in &b.energy {
            for w in hist.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "energy rose {} -> {}", w[0], w[1]);
            }
        }
        for (j, i, v) in b.prolongation.triplets() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            prop_assert!(b.regions[i].binary_search(&j).is_ok());
        }
    }

    #[test]
    fn accepted_bases_have_positive_coarse_diagonals(seed in any::<u64>()) {
        let c = case(seed);
        let a = assemble_conduction(&c.grid, &c.props).unwrap();
        let b = smoothed(&c, 200, FreezeMode::AllBases);
        let rap = b.restriction.matmul(&a.matmul(&b.prolongation));
        prop_assert!(check_diagonal_positivity(&rap).passed());
        prop_assert!(rap.diagonal().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn closed_systems_conserve_energy(seed in any::<u64>(), bdf2 in any::<bool>()) {
        let c = case(seed);
        let scheme = if bdf2 { TimeScheme::Bdf2 } else { TimeScheme::ImplicitEuler };
        let still = FluxField::zero(&c.grid);
        let inflow = Inflow { injection: 20.0, boundary: 20.0 };
        let t0 = random_temperatures(c.grid.cell_count(), seed);
        let sched = Schedule { dt: 0.1 * dfmheat::SECONDS_PER_YEAR, end_time: 2.0 * dfmheat::SECONDS_PER_YEAR };

        let fine = assemble_fine(&c.grid, &still, &c.props, inflow).unwrap();
        let mut e = fine.energy(&t0);
        simulate(&fine, &t0, sched, scheme, |s| {
            let next = fine.energy(&s.temperature);
            assert!(((next - e) / e).abs() < 1e-10, "fine drift {}", (next - e) / e);
            e = next;
        }).unwrap();

        let cond = assemble_conduction(&c.grid, &c.props).unwrap();
        let model = FineModel { grid: &c.grid, flux: &still, props: &c.props, conduction: &cond, inflow };
        for basis in [constant_basis(&c.partition), smoothed(&c, 20, FreezeMode::AllBases)] {
            let cs = assemble_coarse(&model, &c.partition, &basis, Upwinding::NetFlux).unwrap();
            let sys = cs.thermal().unwrap();
            let tc = random_temperatures(cs.len(), seed ^ 1);
            let mut e = sys.energy(&tc);
            simulate(&sys, &tc, sched, scheme, |s| {
                let next = sys.energy(&s.temperature);
                assert!(((next - e) / e).abs() < 1e-10, "coarse drift {}", (next - e) / e);
                e = next;
            }).unwrap();
        }
    }

    #[test]
    fn injection_stays_within_bounds(seed in any::<u64>()) {
        let c = case(seed);
        let inflow = Inflow { injection: 20.0, boundary: 20.0 };
        let fine = assemble_fine(&c.grid, &c.flux, &c.props, inflow).unwrap();
        let t0 = vec![100.0; c.grid.cell_count()];
        let sched = Schedule { dt: 30.0 * 86_400.0, end_time: 5.0 * dfmheat::SECONDS_PER_YEAR };
        let range = |tol: f64| move |s: &dfmheat::thermal::TransportState| {
            for &t in &s.temperature {
                assert!((20.0 - tol..=100.0 + tol).contains(&t), "{t} outside [20, 100] at step {}", s.step);
            }
        };
        simulate(&fine, &t0, sched, TimeScheme::ImplicitEuler, range(1e-9)).unwrap();
        simulate(&fine, &t0, sched, TimeScheme::Bdf2, range(1e-3)).unwrap();
    }
}
