use std::sync::OnceLock;

use proptest::prelude::*;
use swing_core::{
    american_put, lattice_price, put_price, solve, Error, ModelParams, RegionLabel, SolverConfig, SwingSolution,
};

const STEPS: usize = 100;

fn solved() -> &'static SwingSolution {
    static SOL: OnceLock<SwingSolution> = OnceLock::new();
    SOL.get_or_init(|| solve(&ModelParams::base(), &SolverConfig::with_steps(STEPS)).unwrap())
}

fn x_grid() -> Vec<f64> {
    (0..=60).map(|i| 0.5 + 0.02 * i as f64).collect()
}

#[test]
fn more_rights_are_worth_more_but_not_more_than_singles() {
    let s = solved();
    let p = ModelParams::base();
    for t in [0.0, 0.1, 0.2, 0.3, p.horizon(2) - p.refract] {
        for x in x_grid() {
            let v1 = s.value(1, t, x).unwrap();
            let v2 = s.value(2, t, x).unwrap();
            assert!(v2 >= v1 - 1e-9, "t={t} x={x}: {v2} < {v1}");
            assert!(v2 <= 2.0 * v1 + 1e-9, "t={t} x={x}: {v2} > 2·{v1}");
        }
    }
}

/// At its horizon the two-right holder must spend the first right and can
/// only hold the second to maturity, which out of the money is worth less
/// than one American put.
#[test]
fn forced_exercise_reverses_the_level_order_at_the_horizon() {
    let s = solved();
    let p = ModelParams::base();
    let h = p.horizon(2);
    let x = 1.08;
    let v2 = s.value(2, h, x).unwrap();
    assert!((v2 - put_price(x, p.refract, &p)).abs() < 1e-12);
    assert!(s.value(1, h, x).unwrap() > v2 + 1e-5);
}

#[test]
fn value_is_convex_and_two_lipschitz_in_price() {
    let s = solved();
    let xs = x_grid();
    let h = xs[1] - xs[0];
    for t in [0.0, 0.15, 0.3] {
        let v: Vec<f64> = xs.iter().map(|&x| s.value(2, t, x).unwrap()).collect();
        for w in v.windows(2) {
            assert!(((w[1] - w[0]) / h).abs() <= 2.0 + 1e-6);
        }
        for w in v.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-6, "t={t}: {w:?}");
        }
    }
}

#[test]
fn value_is_nonincreasing_in_time() {
    let s = solved();
    let h = ModelParams::base().horizon(2);
    for x in [0.8, 0.95, 1.0, 1.1, 1.4] {
        let v: Vec<f64> = (0..=20)
            .map(|i| s.value(2, h * i as f64 / 21.0, x).unwrap())
            .collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-7), "x={x}: {v:?}");
    }
}

#[test]
fn value_matches_gain_on_the_stopping_set_and_dominates_it_elsewhere() {
    let s = solved();
    let mut stops = 0;
    for t in [0.0, 0.1, 0.2, 0.3, 0.4] {
        for x in x_grid() {
            let g = s.gain(2, t, x).unwrap();
            let v = s.value_eep(2, t, x).unwrap();
            if s.classify(2, t, x).unwrap().is_stop() {
                stops += 1;
                assert!((v - g).abs() <= 1e-4, "t={t} x={x}: {v} vs {g}");
            } else {
                assert!(v >= g - 1e-7, "t={t} x={x}: {v} < {g}");
            }
        }
    }
    assert!(stops > 10);
}

#[test]
fn european_legs_bound_the_value_from_below() {
    let s = solved();
    for x in x_grid() {
        assert!(s.leg_j(2, 0.0, x).unwrap() <= s.value_eep(2, 0.0, x).unwrap());
    }
    // at the horizon the legs are the gain itself
    let h = ModelParams::base().horizon(2);
    for x in [0.8, 1.0, 1.3] {
        let (j, g) = (s.leg_j(2, h, x).unwrap(), s.gain(2, h, x).unwrap());
        assert!((j - g).abs() < 1e-12);
    }
}

#[test]
fn gain_routes_agree() {
    let s = solved();
    for t in [0.0, 0.2] {
        for x in [0.7, 0.9, 1.0, 1.2] {
            let a = s.gain(2, t, x).unwrap();
            let b = s.gain_by_quadrature(2, t, x).unwrap();
            assert!((a - b).abs() <= 1e-5, "t={t} x={x}: {a} vs {b}");
        }
    }
}

#[test]
fn gain_is_decreasing_convex_and_above_payoff() {
    let s = solved();
    let g: Vec<f64> = x_grid().iter().map(|&x| s.gain(2, 0.1, x).unwrap()).collect();
    for (x, v) in x_grid().iter().zip(&g) {
        assert!(*v >= (1.0 - x).max(0.0));
    }
    assert!(g.windows(2).all(|w| w[1] <= w[0]));
    assert!(g.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-6));
    let far = s.gain(2, 0.1, 50.0).unwrap();
    assert!((0.0..1e-12).contains(&far));
}

#[test]
fn level_one_is_the_american_put() {
    let s = solved();
    let b1 = &s.regions.level(1).unwrap().lower;
    let p = ModelParams::base();
    for x in [0.8, 0.9, 1.0, 1.1] {
        let a = american_put(0.0, x, b1, &p).unwrap();
        assert!((s.value(1, 0.0, x).unwrap() - a).abs() < 1e-12);
    }
}

#[test]
fn level_two_matches_the_lattice_within_one_percent() {
    let s = solved();
    let lat = lattice_price(&ModelParams::base(), 1200, 2).unwrap();
    for x in [0.9, 1.0, 1.1] {
        let v = s.value_eep(2, 0.0, x).unwrap();
        let l = lat.value_at(2, x).unwrap();
        assert!((v - l).abs() <= 0.01 * l, "x={x}: {v} vs {l}");
    }
}

#[test]
fn region_labels() {
    let s = solved();
    assert_eq!(s.classify(2, 0.1, 1.0).unwrap(), RegionLabel::Continue);
    assert_eq!(s.classify(2, 0.1, 1e-6).unwrap(), RegionLabel::StopLow);
    assert_eq!(s.classify(2, 0.1, 1e3).unwrap(), RegionLabel::StopHigh);
    assert_eq!(s.classify(1, 0.1, 100.0).unwrap(), RegionLabel::Continue);
    for t in [0.0, 0.2, 0.4] {
        for x in x_grid() {
            assert_ne!(s.classify(1, t, x).unwrap(), RegionLabel::StopHigh);
        }
    }
}

#[test]
fn generator_is_negative_and_nonincreasing_in_time() {
    let s = solved();
    assert!(matches!(s.h_func(2, 0.1, 1.0), Err(Error::Domain(_))));
    for x in [0.8, 0.97, 1.03, 1.3] {
        let h: Vec<f64> = (0..10).map(|i| s.h_func(2, 0.04 * i as f64, x).unwrap()).collect();
        assert!(h.iter().all(|&v| v < 0.0), "x={x}: {h:?}");
        assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12), "x={x}: {h:?}");
    }
    assert!(s.h_func(2, 0.1, 20.0).unwrap() > -1e-12);
}

#[test]
fn probes_beyond_the_horizon_are_rejected() {
    let s = solved();
    let h = ModelParams::base().horizon(2);
    assert!(matches!(s.value_eep(2, h + 0.01, 1.0), Err(Error::Horizon { .. })));
    assert!(matches!(s.gain(2, h + 0.01, 1.0), Err(Error::Horizon { .. })));
    assert!(s.value(3, 0.0, 1.0).is_err());
}

#[test]
fn solution_json_round_trip_preserves_prices() {
    let s = solved();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solution.json");
    s.write_json(&path).unwrap();
    let back = SwingSolution::read_json(&path).unwrap();
    for x in [0.8, 1.0, 1.2] {
        assert_eq!(s.value(2, 0.05, x).unwrap(), back.value(2, 0.05, x).unwrap());
    }
}

#[test]
fn price_surface_csv() {
    let s = solved();
    let mut buf = Vec::new();
    s.write_price_surface(&[0.0, 0.1], &[0.8, 1.0], &[1, 2], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x,level,value,label");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_dominates_payoff_and_gain(t in 0.0..0.41f64, x in 0.4..2.0f64) {
        let s = solved();
        let v = s.value(2, t, x).unwrap();
        prop_assert!(v >= (1.0 - x).max(0.0) - 1e-12);
        prop_assert!(v >= s.gain(2, t, x).unwrap() - 1e-7);
        prop_assert!(v <= 2.0 * s.value(1, t, x).unwrap() + 1e-9);
    }

    #[test]
    fn labels_follow_the_boundaries(t in 0.0..0.41f64, x in 0.4..40.0f64) {
        let s = solved();
        let lb = s.regions.level(2).unwrap();
        let (b, c) = (lb.lower.at(t), lb.upper.at(t));
        let expect = if x <= b {
            RegionLabel::StopLow
        } else if x >= c {
            RegionLabel::StopHigh
        } else {
            RegionLabel::Continue
        };
        prop_assert_eq!(s.classify(2, t, x).unwrap(), expect);
    }
}
