use arrtoc::problems::{evaporator_problem, illustrative_problem, ConstraintProfile, CONTROLLER_SETTINGS, EVAPORATOR_NOMINAL};
use arrtoc::plants::CostParams;
use arrtoc::solver::{brute_force_worst_case, nominal_optimum, solve_aro, solve_arrtoc, Sense};
use arrtoc::{ProblemSpec, SolverConfig, UncertaintySet};
use std::sync::Arc;

fn neg(p: &ProblemSpec) -> ProblemSpec {
    let f = p.objective.clone();
    ProblemSpec {
        objective: Arc::new(move |v: &[f64]| -f(v)),
        gradient: p.gradient.clone().map(|g| -> arrtoc::GradientFn { Arc::new(move |v: &[f64]| g(v).iter().map(|c| -c).collect()) }),
        sense: Sense::Minimize,
        ..p.clone()
    }
}

fn small_radius_solution() -> (ProblemSpec, Vec<f64>, f64) {
    let p = illustrative_problem(UncertaintySet::sphere(2, 0.1).unwrap());
    let (sol, _) = solve_arrtoc(&p, &[2.78, 4.02], &SolverConfig::default()).unwrap();
    let f = p.objective.clone();
    let worst = -brute_force_worst_case(&|v| -f(v), &sol.point, &p.uncertainty, 61);
    (p, sol.point, worst)
}

#[test]
fn small_radius_minimum_matches_nominal_value() {
    let (p, _, worst) = small_radius_solution();
    let (_, nominal) = nominal_optimum(&p, 181).unwrap();
    assert!((worst - nominal).abs() < 0.5, "{worst} vs {nominal}");
}

#[test]
fn small_radius_minimum_matches_local_oracle() {
    let (p, _, worst) = small_radius_solution();
    let f = p.objective.clone();
    let mut best = f64::NEG_INFINITY;
    for i in 0..101 {
        for j in 0..101 {
            let c = [2.68 + 0.002 * i as f64, 3.92 + 0.002 * j as f64];
            best = best.max(-brute_force_worst_case(&|v| -f(v), &c, &p.uncertainty, 61));
        }
    }
    assert!(worst >= best - 0.05, "{worst} vs {best}");
}

#[test]
fn maximize_equals_minimize_negated() {
    let p = illustrative_problem(UncertaintySet::sphere(2, 0.3).unwrap());
    let cfg = SolverConfig { max_outer_iterations: 40, ..SolverConfig::default() };
    let (a, ta) = solve_aro(&p, &[1.0, 1.0], &cfg).unwrap();
    let (b, tb) = solve_aro(&neg(&p), &[1.0, 1.0], &cfg).unwrap();
    assert_eq!(a.point, b.point);
    assert_eq!(ta.records.len(), tb.records.len());
    for (x, y) in ta.records.iter().zip(&tb.records) {
        assert_eq!(x.iterate, y.iterate);
    }
}

#[test]
fn identical_seeds_identical_traces() {
    let p = illustrative_problem(UncertaintySet::new(vec![0.4, 0.15]).unwrap());
    let cfg = SolverConfig { seed: 3, max_outer_iterations: 60, ..SolverConfig::default() };
    let a = solve_arrtoc(&p, &[0.5, 2.0], &cfg).unwrap();
    let b = solve_arrtoc(&p, &[0.5, 2.0], &cfg).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn accepted_iterates_do_not_get_worse() {
    let p = illustrative_problem(UncertaintySet::sphere(2, 0.3).unwrap());
    let (_, trace) = solve_aro(&p, &[0.0, 3.0], &SolverConfig::default()).unwrap();
    let f = |v: &[f64]| -(p.objective)(v);
    let mut incumbent = f64::INFINITY;
    let mut prev = f64::INFINITY;
    let mut accepted = 0;
    for r in &trace.records {
        if !(r.worst_cost < incumbent) {
            continue;
        }
        incumbent = r.worst_cost;
        accepted += 1;
        let w = brute_force_worst_case(&f, &r.iterate, &p.uncertainty, 61);
        assert!(w <= prev + 0.05, "iteration {}: {w} after {prev}", r.iteration);
        prev = prev.min(w);
    }
    assert!(accepted > 1);
}

#[test]
fn evaporator_solutions_are_robustly_feasible() {
    let s = CONTROLLER_SETTINGS[0];
    let p = evaporator_problem(100.0, 0.2, s.radii(), ConstraintProfile::Reported, CostParams::default()).unwrap();
    let start = [EVAPORATOR_NOMINAL.x_b - 0.02, EVAPORATOR_NOMINAL.h + 0.3, EVAPORATOR_NOMINAL.p];
    let (sol, _) = solve_arrtoc(&p, &start, &SolverConfig::default()).unwrap();
    assert!(sol.feasible_under_perturbation);
    for h in p.all_constraints() {
        let worst = brute_force_worst_case(&|v| h(v), &sol.point, &p.uncertainty, 21);
        assert!(worst <= 1e-6, "{worst}");
    }
}

#[test]
fn larger_radii_never_raise_robust_profit() {
    let profit = |r: [f64; 3]| {
        let p = evaporator_problem(100.0, 0.2, r, ConstraintProfile::Reported, CostParams::default()).unwrap();
        let start = [0.85, 2.5, 1.0e5];
        solve_arrtoc(&p, &start, &SolverConfig::default()).unwrap().0.worst_case_estimate
    };
    let settings: Vec<[f64; 3]> = CONTROLLER_SETTINGS.iter().map(|s| s.radii()).collect();
    let values: Vec<f64> = settings.iter().map(|r| profit(*r)).collect();
    for i in 0..settings.len() {
        for j in 0..settings.len() {
            if (0..3).all(|k| settings[i][k] >= settings[j][k]) && i != j {
                assert!(values[i] <= values[j] + 0.1, "setting {} ({}) vs {} ({})", i + 1, values[i], j + 1, values[j]);
            }
        }
    }
}
