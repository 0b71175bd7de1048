use proptest::prelude::*;

use randcover::covering::{
    annulus_cube_count, annulus_indices, coverage_count, deviation_stats, generate_cover, CoverConfig, Schedule,
};
use randcover::frostman::{certify_lower_bound, grow_tree, ChildFloor, TreeConfig, Verdict};
use randcover::geometry::Point;
use randcover::measures::{analytic_profile, ExactOracle, MeasureModel};
use randcover::spectra::{bound_curves, coarse_counts, coarse_spectrum, is_sentinel, Grid};

fn cover(model: MeasureModel, alpha: f64, n_max: u64, seed: u64) -> randcover::covering::CoverSequence {
    generate_cover(CoverConfig { model, schedule: Schedule::Power(alpha), n_max, seed }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn chernoff_tail_bounds_deviation_frequency(p in 0.05f64..0.5, eps in 0.05f64..0.3, base in 0u64..1000) {
        let n = 2000u64;
        let runs = 40;
        let bad = (0..runs)
            .filter(|i| {
                let c = cover(MeasureModel::uniform_box(1).unwrap(), 2.0, n, base * runs + i);
                let d = deviation_stats(&c, n, |_, b| b.center().x() < p, |_| p).unwrap();
                (d.ratio(n as usize) - 1.0).abs() > eps
            })
            .count();
        let m = p * n as f64;
        let bound = 2.0 * (-eps * eps * m / 3.0).exp() + 0.01;
        // one deviation in 40 runs is within sampling noise of any bound
        prop_assert!(bad as f64 / runs as f64 <= bound.max(1.0 / runs as f64), "{bad}/{runs} vs {bound}");
    }

    #[test]
    fn coverage_count_is_brute_count(seed in any::<u64>(), x in 0.0f64..1.0, up_to in 1u64..512) {
        let c = cover(MeasureModel::cantor(), 1.25, 512, seed);
        let x = Point::scalar(x);
        let brute = (1..=up_to).filter(|&k| c.center(k).dist(&x) <= c.radius(k)).count() as u64;
        prop_assert_eq!(coverage_count(&x, &c, up_to).unwrap(), brute);
    }

    #[test]
    fn covers_replay_from_seed(seed in any::<u64>()) {
        let a = cover(MeasureModel::example(1.0 / 6.0, 1.3, 40).unwrap(), 2.0, 64, seed);
        let b = cover(MeasureModel::example(1.0 / 6.0, 1.3, 40).unwrap(), 2.0, 64, seed);
        for k in 1..=64 {
            prop_assert_eq!(a.ball(k), b.ball(k));
        }
    }
}

#[test]
fn annulus_counts_for_uniform_centres() {
    let model = MeasureModel::uniform_box(1).unwrap();
    let oracle = ExactOracle::new(&model).unwrap();
    let c = cover(model, 2.0, 1 << 12, 11);
    for n in 4..=20 {
        let (lo, hi) = annulus_indices(n, 2.0);
        let hit = annulus_cube_count(&c, &oracle, n, 1.0, 0.1, 2.0).unwrap();
        // every level-n cube has mass exactly 2^-n
        assert!(hit >= 1 && hit <= hi - lo, "n = {n}: {hit} of {}", hi - lo);
        assert_eq!(annulus_cube_count(&c, &oracle, n, 0.5, 0.1, 2.0).unwrap(), 0);
    }
}

#[test]
fn cantor_spectrum_sits_between_bounds() {
    let model = MeasureModel::cantor();
    let oracle = ExactOracle::new(&model).unwrap();
    let grid = Grid::default_s();
    let levels: Vec<u32> = (6..=14).collect();
    let report = coarse_counts(&oracle, &levels, grid, 1 << 24).unwrap();
    let g = coarse_spectrum(&report, 0.05).unwrap();
    let profile = analytic_profile(&model).unwrap();
    let b = bound_curves(&profile, &g, 0.0);
    for i in 0..grid.count {
        assert!(b.lower.get(i) <= b.upper_main.get(i) + 1e-9, "x = {}", grid.x(i));
        assert!(b.lower.get(i) <= b.upper_alt.get(i) + 1e-9, "x = {}", grid.x(i));
        if !is_sentinel(g.get(i)) {
            assert!(b.upper_main.get(i) >= profile.f.eval(grid.x(i)) - 1e-12);
        }
    }
}

#[test]
fn grown_tree_energy_partials_are_dominated() {
    let mut cfg = TreeConfig::new(MeasureModel::uniform_box(1).unwrap(), 2.0, 0.1, 2, 4);
    cfg.child_floor = ChildFloor::AtLeast(2);
    let tree = grow_tree(&cfg).unwrap();
    let cert = certify_lower_bound(&tree, 0.3, 1.0).unwrap();
    let r = &cert.report;
    assert_eq!(r.partial_direct.len(), r.partial_bound.len());
    for (d, b) in r.partial_direct.iter().zip(&r.partial_bound) {
        assert!(d <= b, "{d} > {b}");
    }
    if cert.verdict == Verdict::CertifiedAtT {
        assert!(r.bound_energy.is_finite());
    }
    assert!(!cert.reason.is_empty());
}
