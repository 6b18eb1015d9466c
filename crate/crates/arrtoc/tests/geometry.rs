use approx::assert_relative_eq;
use arrtoc::exploration::{explore_constraints, explore_cost, ExploreConfig, HistorySet};
use arrtoc::problems::{illustrative_objective, ILLUSTRATIVE_LOWER, ILLUSTRATIVE_UPPER};
use arrtoc::robust_move::{min_norm_point, solve_direction, step_size, DirectionResult, SigmaState};
use arrtoc::{ScalarFn, UncertaintySet};
use proptest::prelude::*;
use std::sync::Arc;

fn radii2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..2.0, 2)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter().map(|c| c / n).collect()
}

proptest! {
    #[test]
    fn unit_ball_round_trip(r in radii2(), d in prop::collection::vec(-3.0f64..3.0, 2)) {
        let set = UncertaintySet::new(r).unwrap();
        let w = set.to_unit_ball(&d).unwrap();
        let back = set.from_unit_ball(&w).unwrap();
        for (a, b) in back.iter().zip(&d) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let wn = w.iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert_eq!(set.contains(&d).unwrap(), wn <= 1.0 + 1e-12);
        let neg: Vec<f64> = d.iter().map(|c| -c).collect();
        prop_assert_eq!(set.contains(&d).unwrap(), set.contains(&neg).unwrap());
    }

    #[test]
    fn offset_point_stays_in_neighbourhood(r in radii2(), c in prop::collection::vec(-5.0f64..5.0, 2),
                                           w in prop::collection::vec(-1.0f64..1.0, 2)) {
        let set = UncertaintySet::new(r).unwrap();
        let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(wn > 1e-6);
        let w: Vec<f64> = w.iter().map(|v| v / wn.max(1.0)).collect();
        let p = set.offset_point(&c, &w).unwrap();
        prop_assert!(set.neighbourhood_contains(&c, &p).unwrap());
    }

    #[test]
    fn min_norm_is_closest_hull_point(pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..7)) {
        prop_assume!(pts.iter().all(|p| p.iter().map(|c| c * c).sum::<f64>() > 1e-4));
        let units: Vec<Vec<f64>> = pts.iter().map(|p| unit(p)).collect();
        let p = min_norm_point(&units).unwrap();
        let pp: f64 = p.iter().map(|c| c * c).sum();
        // Optimality: every generator lies on the far side of the supporting plane.
        for u in &units {
            let d: f64 = u.iter().zip(&p).map(|(a, b)| a * b).sum();
            prop_assert!(d >= pp - 1e-7, "{d} < {pp}");
        }
    }

    #[test]
    fn directions_clear_every_offset(pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..6)) {
        prop_assume!(pts.iter().all(|p| p.iter().map(|c| c * c).sum::<f64>() > 1e-4));
        let eps = 0.01;
        if let DirectionResult::Direction { direction, margin } = solve_direction(&pts, &[], &[0.0, 0.0], eps).unwrap() {
            prop_assert!(margin <= -eps);
            for p in &pts {
                let u = unit(p);
                prop_assert!(u[0] * direction[0] + u[1] * direction[1] <= -eps + 1e-12);
            }
        }
    }

    #[test]
    fn step_leaves_points_outside(pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..8),
                                  angle in 0.0f64..std::f64::consts::TAU) {
        let pts: Vec<Vec<f64>> = pts.into_iter().filter(|p| p[0] * p[0] + p[1] * p[1] <= 1.0).collect();
        prop_assume!(!pts.is_empty());
        let d = [angle.cos(), angle.sin()];
        let rho = step_size(&pts, &[0.0, 0.0], &d, 1.0).unwrap();
        let c = [rho * d[0], rho * d[1]];
        for p in &pts {
            let dist = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            prop_assert!(dist >= 1.0 - 1e-9, "{dist}");
        }
    }

    #[test]
    fn sigma_bound_covers_shrinks(sigma in 1e-3f64..10.0, factor in 1.01f64..2.0) {
        let st = SigmaState::new(sigma, 1e-3, factor);
        let mut s = sigma;
        let mut n = 0;
        while s >= 1e-3 {
            s /= factor;
            n += 1;
        }
        prop_assert!(n <= st.shrink_bound());
    }
}

#[test]
fn sphere_matches_euclidean_ball() {
    let set = UncertaintySet::sphere(3, 0.5).unwrap();
    assert!(set.contains(&[0.3, 0.4, 0.0]).unwrap());
    assert!(!set.contains(&[0.3, 0.4, 1e-3]).unwrap());
    assert_relative_eq!(set.quadratic_form(&[0.25, 0.0, 0.0]).unwrap(), 0.25, epsilon = 1e-15);
}

#[test]
fn min_norm_of_opposed_pair_is_origin() {
    let p = min_norm_point(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    assert_relative_eq!(p[0], 0.0, epsilon = 1e-12);
    assert_relative_eq!(p[1], 0.0, epsilon = 1e-12);
    let q = min_norm_point(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
    assert_relative_eq!(q[0], 1.0, epsilon = 1e-10);
    assert_relative_eq!(q[1], 0.0, epsilon = 1e-10);
}

#[test]
fn exploration_matches_grid_on_polynomial() {
    let f: ScalarFn = Arc::new(|v: &[f64]| -illustrative_objective(v[0], v[1]));
    let set = UncertaintySet::sphere(2, 0.5).unwrap();
    let cfg = ExploreConfig::default();
    let mut state: u64 = 17;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..20 {
        let c: Vec<f64> = (0..2).map(|i| ILLUSTRATIVE_LOWER[i] + next() * (ILLUSTRATIVE_UPPER[i] - ILLUSTRATIVE_LOWER[i])).collect();
        let h = explore_cost(&f, None, &c, &set, &HistorySet::new(), &cfg).unwrap();
        let est = h.worst_within(&c, &set).unwrap();
        assert!(est >= f(&c));
        for e in h.entries() {
            let dx: Vec<f64> = e.point.iter().zip(&c).map(|(a, b)| a - b).collect();
            assert!(set.quadratic_form(&dx).unwrap() <= 1.0 + 1e-9);
        }
        let mut grid = f64::NEG_INFINITY;
        for i in 0..201 {
            for j in 0..201 {
                let dx = [-0.5 + i as f64 * 0.005, -0.5 + j as f64 * 0.005];
                if dx[0] * dx[0] + dx[1] * dx[1] <= 0.25 {
                    grid = grid.max(f(&[c[0] + dx[0], c[1] + dx[1]]));
                }
            }
        }
        for k in 0..3600 {
            let a = k as f64 * std::f64::consts::TAU / 3600.0;
            grid = grid.max(f(&[c[0] + 0.5 * a.cos(), c[1] + 0.5 * a.sin()]));
        }
        assert!((est - grid).abs() < 0.05, "centre {c:?}: {est} vs {grid}");
    }
}

#[test]
fn constraint_history_keeps_only_violations() {
    let h: ScalarFn = Arc::new(|v: &[f64]| v[0] + v[1] - 1.0);
    let set = UncertaintySet::new(vec![0.4, 0.2]).unwrap();
    let out = explore_constraints(&[h], &[0.6, 0.3], &set, &ExploreConfig::default()).unwrap();
    assert!(!out.is_empty());
    assert!(out.entries().iter().all(|e| e.value > 0.0));
}
