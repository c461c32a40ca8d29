use proptest::prelude::*;

use superprocess::config::RunConfig;
use superprocess::measures::{
    cdf, generalized_inverse, integrate, integrate_inverse, pair_l1, rho, windowed_rho, FiniteMeasure, Grid,
    TestFunction,
};

fn atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0f64..3.0, 0.01f64..2.0), 1..12)
}

fn measure(a: &[(f64, f64)]) -> FiniteMeasure {
    FiniteMeasure::from_atoms(a.iter().copied()).unwrap()
}

/// Atoms at grid nodes, offset so that index 0 is the window center.
fn on_nodes(grid: &Grid, a: &[(i32, f64)]) -> FiniteMeasure {
    let mid = (grid.cells / 2) as i32;
    FiniteMeasure::from_atoms(a.iter().map(|&(k, w)| (grid.node((mid + k) as usize), w))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rho_is_a_metric(a in atoms(), b in atoms(), c in atoms()) {
        let (x, y, z) = (measure(&a), measure(&b), measure(&c));
        prop_assert_eq!(rho(&x, &x), 0.0);
        prop_assert!((rho(&x, &y) - rho(&y, &x)).abs() < 1e-12);
        prop_assert!(rho(&x, &z) <= rho(&x, &y) + rho(&y, &z) + 1e-12);
    }

    #[test]
    fn distinct_masses_have_positive_rho(a in atoms(), extra in 0.1f64..1.0) {
        let x = measure(&a);
        let y = x.scaled(1.0 + extra).unwrap();
        prop_assert!(rho(&x, &y) > 0.0);
    }

    #[test]
    fn windowed_rho_agrees_with_rho_on_grid_atoms(a in prop::collection::vec((-30i32..30, 0.01f64..2.0), 1..10),
                                                 b in prop::collection::vec((-30i32..30, 0.01f64..2.0), 1..10)) {
        // atoms on grid nodes inside the window: both formulas integrate
        // the same step functions
        let grid = Grid::new(-4.0, 4.0, 80).unwrap();
        let (x, y) = (on_nodes(&grid, &a), on_nodes(&grid, &b));
        let exact = rho(&x, &y);
        let w = windowed_rho(&cdf(&x, &grid).unwrap(), &cdf(&y, &grid).unwrap()).unwrap();
        prop_assert!((exact - w).abs() < 1e-10, "{} vs {}", exact, w);
    }

    #[test]
    fn cdf_is_monotone_with_full_mass(a in atoms()) {
        let grid = Grid::new(-4.0, 4.0, 64).unwrap();
        let mu = measure(&a);
        let u = cdf(&mu, &grid).unwrap();
        prop_assert!(u.values().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(u.values()[0] >= 0.0);
        prop_assert!((u.right_end() - mu.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn inverse_is_a_left_inverse_on_levels(a in atoms(), level in 0.0f64..1.0) {
        let grid = Grid::new(-4.0, 4.0, 64).unwrap();
        let u = cdf(&measure(&a), &grid).unwrap();
        let top = u.right_end();
        let lvl = level * top * 0.999;
        let x = generalized_inverse(&u, lvl);
        // the inverse is the first node where u exceeds the level
        prop_assert!(x.is_finite());
        let j = ((x - grid.x_min) / grid.dx()).round() as usize;
        prop_assert_eq!(grid.node(j), x);
        prop_assert!(u.values()[j] > lvl);
        if j > 0 {
            prop_assert!(u.values()[j - 1] <= lvl);
        }
    }

    #[test]
    fn inverse_change_of_variables(a in prop::collection::vec((-30i32..30, 0.01f64..2.0), 1..10)) {
        // atoms on nodes, so the inverse hits atoms exactly and only the
        // a-axis Riemann error remains
        let grid = Grid::new(-4.0, 4.0, 80).unwrap();
        let mu = on_nodes(&grid, &a);
        let u = cdf(&mu, &grid).unwrap();
        let f = TestFunction::bump(0.2, 2.5);
        let da = 1e-4;
        let err = (integrate_inverse(&u, &f, da) - integrate(&mu, &f)).abs();
        prop_assert!(err <= 2.0 * a.len() as f64 * da, "{}", err);
    }

    #[test]
    fn pairing_duality_for_a_ramp(a in prop::collection::vec((-30i32..30, 0.01f64..2.0), 1..10)) {
        // f = derivative of a smooth bump G, so ⟨u, f⟩₁ = Σ w (G(∞) − G(x)) = −Σ w G(x)
        let grid = Grid::new(-4.0, 4.0, 800).unwrap();
        let mu = on_nodes(&grid, &a.iter().map(|&(k, w)| (10 * k, w)).collect::<Vec<_>>());
        let g = TestFunction::bump(0.0, 3.5);
        let f = TestFunction::custom("bump'", g.support(), {
            let g = g.clone();
            move |x| g.first(x)
        }, {
            let g = g.clone();
            move |x| g.second(x)
        }, |_| 0.0);
        let u = cdf(&mu, &grid).unwrap();
        let oracle: f64 = -mu.atoms().iter().map(|at| at.weight * g.value(at.position)).sum::<f64>();
        let got = pair_l1(&u, &f).unwrap();
        // atoms on nodes: the trapezoid rule only makes the half-cell error w·dx·|f(x)|/2
        let tol = mu.total_mass() * grid.dx() * 0.5 + 1e-4;
        prop_assert!((got - oracle).abs() <= tol, "{} vs {}", got, oracle);
    }

    #[test]
    fn config_round_trip(n in 1usize..5000, seed in any::<u64>(), c in 0.0f64..5.0, lambda in 0.0f64..100.0,
                         t_end in 0.1f64..3.0, sample in any::<bool>()) {
        let text = serde_json::json!({
            "mode": "particles", "n": n, "t_end": t_end, "seed": seed,
            "colonies": [
                {"branching_rate": lambda, "offspring_mean_shift": 0.5, "offspring_variance": 0.5},
                {"branching_rate": lambda, "offspring_mean_shift": 0.0, "offspring_variance": 1.0}
            ],
            "eta": {"model": "mass_coupled", "c": c},
            "chi": {"atoms": [[0.0, 1.0]]},
            "initial": [{"atoms": [[0.0, 1.0]], "sample": sample}, {"csv": "mu2.csv"}],
            "spde": {"x_min": -2.0, "x_max": 2.0, "cells": 40, "cell_rule": "fractional"},
            "checkpoints": [0.1],
            "snapshot_grid": {"x_min": -1.0, "x_max": 1.0, "cells": 10}
        }).to_string();
        let a = RunConfig::from_json(&text).unwrap();
        let b = RunConfig::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.hash(), b.hash());
    }
}
