//! Outer drivers: unconstrained robust descent and the constrained variant
//! with feasibility-restoration moves, plus brute-force oracles.

use crate::error::{Error, Result};
use crate::exploration::{
    explore_constraints, explore_cost_into, ConstraintHistorySet, ConstraintViolation, ExploreConfig, HistorySet,
};
use crate::robust_move::{robust_local_move, solve_direction, step_size, DirectionResult, MoveOutcome, SigmaState};
use crate::uncertainty::UncertaintySet;
use crate::{GradientFn, ScalarFn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub objective: ScalarFn,
    pub gradient: Option<GradientFn>,
    pub sense: Sense,
    /// Feasible iff every value is `≤ 0`.
    pub constraints: Vec<ScalarFn>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub uncertainty: UncertaintySet,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("sense", &self.sense)
            .field("constraints", &self.constraints.len())
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("uncertainty", &self.uncertainty)
            .finish()
    }
}

impl ProblemSpec {
    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lower.len();
        if self.upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.upper.len() });
        }
        if self.uncertainty.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.uncertainty.dim() });
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(l < u) {
                return Err(Error::InvalidParameter { name: "bounds", reason: format!("lower {l} >= upper {u}") });
            }
        }
        Ok(())
    }

    /// Objective in minimization form.
    pub fn cost(&self) -> ScalarFn {
        match self.sense {
            Sense::Minimize => self.objective.clone(),
            Sense::Maximize => {
                let f = self.objective.clone();
                Arc::new(move |x: &[f64]| -f(x))
            }
        }
    }

    pub fn cost_gradient(&self) -> Option<GradientFn> {
        let g = self.gradient.clone()?;
        Some(match self.sense {
            Sense::Minimize => g,
            Sense::Maximize => Arc::new(move |x: &[f64]| g(x).into_iter().map(|v| -v).collect()),
        })
    }

    /// Problem constraints followed by `lo − xᵢ` and `xᵢ − hi` per axis.
    pub fn all_constraints(&self) -> Vec<ScalarFn> {
        let mut out = self.constraints.clone();
        for i in 0..self.dimension() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            out.push(Arc::new(move |x: &[f64]| lo - x[i]));
            out.push(Arc::new(move |x: &[f64]| x[i] - hi));
        }
        out
    }

    pub fn with_uncertainty(&self, uncertainty: UncertaintySet) -> Self {
        Self { uncertainty, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub sigma_init_factor: f64,
    pub sigma_shrink: f64,
    pub sigma_min: f64,
    pub delta_fraction: f64,
    pub max_outer_iterations: usize,
    /// Floor on the step length in unit-ball coordinates.
    pub min_step: f64,
    /// Non-improving iterations tolerated before the step floor is halved.
    pub stall_patience: usize,
    pub explore: ExploreConfig,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            sigma_init_factor: 0.2,
            sigma_shrink: 1.05,
            sigma_min: 0.001,
            delta_fraction: 0.01,
            max_outer_iterations: 200,
            min_step: 0.05,
            stall_patience: 5,
            explore: ExploreConfig::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("{v} must be positive") })
            }
        };
        pos("epsilon", self.epsilon)?;
        pos("sigma_init_factor", self.sigma_init_factor)?;
        pos("sigma_min", self.sigma_min)?;
        pos("delta_fraction", self.delta_fraction)?;
        if !(0.0..=1.0).contains(&self.min_step) {
            return Err(Error::InvalidParameter { name: "min_step", reason: format!("{} must lie in [0, 1]", self.min_step) });
        }
        if self.stall_patience == 0 {
            return Err(Error::InvalidParameter { name: "stall_patience", reason: "must be at least 1".into() });
        }
        if !(self.sigma_shrink > 1.0) {
            return Err(Error::InvalidParameter { name: "sigma_shrink", reason: "must exceed 1".into() });
        }
        if self.delta_fraction >= 0.5 {
            return Err(Error::InvalidParameter { name: "delta_fraction", reason: "must be small".into() });
        }
        self.explore.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Verified,
    IterationCap,
    Oscillation,
    /// No worst-case improvement while the step floor was halved to its minimum.
    Stalled,
    InfeasibleUnderPerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSolution {
    pub point: Vec<f64>,
    /// Objective at `point`, in the problem's own sense.
    pub nominal_value: f64,
    /// Worst objective found in the neighbourhood of `point`.
    pub worst_case_estimate: f64,
    pub feasible_under_perturbation: bool,
    pub iterations: usize,
    pub termination: Termination,
}

impl RobustSolution {
    pub fn verified(&self) -> bool {
        self.termination == Termination::Verified
    }

    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Verified | Termination::Stalled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    CostMove,
    FeasibilityMove,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub iterate: Vec<f64>,
    pub branch: Branch,
    pub worst_set_size: usize,
    pub constraint_set_size: usize,
    pub sigma: f64,
    pub rho: f64,
    pub direction: Vec<f64>,
    /// Worst-case cost estimate (minimization form).
    pub worst_cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

struct Best {
    point: Vec<f64>,
    worst_cost: f64,
}

/// Running best iterate plus every robustly feasible iterate visited, so the
/// final choice can be re-scored against the complete history.
#[derive(Default)]
struct Incumbent {
    best: Option<Best>,
    visited: Vec<Vec<f64>>,
}

impl Incumbent {
    /// Records `x`; true when it beats the incumbent by more than `min_gain`.
    fn offer(&mut self, x: &[f64], worst: f64, min_gain: f64) -> bool {
        self.visited.push(x.to_vec());
        let prev = self.best.as_ref().map_or(f64::INFINITY, |b| b.worst_cost);
        if worst < prev {
            self.best = Some(Best { point: x.to_vec(), worst_cost: worst });
        }
        worst < prev - min_gain
    }

    fn resolve(&self, history: &HistorySet, set: &UncertaintySet) -> Option<Best> {
        self.visited
            .iter()
            .filter_map(|x| history.worst_within(x, set).map(|w| Best { point: x.clone(), worst_cost: w }))
            .min_by(|a, b| a.worst_cost.total_cmp(&b.worst_cost))
    }
}

fn finish(
    problem: &ProblemSpec,
    point: Vec<f64>,
    worst_cost: f64,
    feasible: bool,
    iterations: usize,
    termination: Termination,
) -> RobustSolution {
    let sign = if problem.sense == Sense::Maximize { -1.0 } else { 1.0 };
    RobustSolution {
        nominal_value: (problem.objective)(&point),
        worst_case_estimate: sign * worst_cost,
        point,
        feasible_under_perturbation: feasible,
        iterations,
        termination,
    }
}

fn check_start(problem: &ProblemSpec, start: &[f64], cfg: &SolverConfig) -> Result<()> {
    problem.validate()?;
    cfg.validate()?;
    if start.len() != problem.dimension() {
        return Err(Error::DimensionMismatch { expected: problem.dimension(), got: start.len() });
    }
    Ok(())
}

fn add(x: &[f64], d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + b).collect()
}

fn floored_step(rho: f64, direction: &[f64], set: &UncertaintySet, min_step: f64) -> Result<(f64, Vec<f64>)> {
    let rho = rho.max(min_step);
    let w: Vec<f64> = direction.iter().map(|d| rho * d).collect();
    Ok((rho, set.from_unit_ball(&w)?))
}

struct Stall {
    floor: f64,
    floor_min: f64,
    idle: usize,
    patience: usize,
}

impl Stall {
    fn new(cfg: &SolverConfig) -> Self {
        Self { floor: cfg.min_step, floor_min: cfg.min_step / 64.0, idle: 0, patience: cfg.stall_patience }
    }

    /// Counts a non-improving iteration; true once the step floor is exhausted.
    fn no_progress(&mut self) -> bool {
        self.idle += 1;
        if self.idle >= self.patience {
            self.idle = 0;
            self.floor /= 2.0;
        }
        self.floor < self.floor_min
    }

    fn finish(&self, problem: &ProblemSpec, best: Option<Best>, k: usize, trace: &mut SolverTrace) -> RobustSolution {
        let b = best.expect("stall requires an earlier best");
        trace.records.push(TraceRecord {
            iteration: k,
            iterate: b.point.clone(),
            branch: Branch::Verify,
            worst_set_size: 0,
            constraint_set_size: 0,
            sigma: f64::NAN,
            rho: 0.0,
            direction: vec![],
            worst_cost: b.worst_cost,
        });
        finish(problem, b.point, b.worst_cost, true, k, Termination::Stalled)
    }
}

/// Re-evaluates violators found outside `set` at their radial projection
/// just inside its boundary.
fn probe_shell(
    found: &ConstraintHistorySet,
    constraints: &[ScalarFn],
    center: &[f64],
    set: &UncertaintySet,
) -> Result<ConstraintHistorySet> {
    let mut out = ConstraintHistorySet::new();
    for v in found.entries() {
        let w = set.scaled_offset(center, &v.point)?;
        let n = crate::norm(&w);
        if n < 1.0 {
            continue;
        }
        let w: Vec<f64> = w.iter().map(|c| c * (1.0 - 1e-6) / n).collect();
        let point = set.offset_point(center, &w)?;
        let value = (constraints[v.constraint_index])(&point);
        out.insert(ConstraintViolation { point, constraint_index: v.constraint_index, value });
    }
    Ok(out)
}

struct Revisits {
    seen: Vec<Vec<f64>>,
}

impl Revisits {
    fn hit(&mut self, x: &[f64], set: &UncertaintySet) -> bool {
        let w = set.to_unit_ball(x).unwrap_or_else(|_| x.to_vec());
        let close = self
            .seen
            .iter()
            .filter(|s| s.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < 1e-6)
            .count();
        self.seen.push(w);
        close >= 3
    }
}

/// Robust descent ignoring constraints and box bounds.
pub fn solve_aro(problem: &ProblemSpec, start: &[f64], cfg: &SolverConfig) -> Result<(RobustSolution, SolverTrace)> {
    check_start(problem, start, cfg)?;
    let cost = problem.cost();
    let grad = problem.cost_gradient();
    let set = &problem.uncertainty;
    let mut x = start.to_vec();
    let mut history = HistorySet::new();
    let mut trace = SolverTrace::default();
    let mut sigma: Option<SigmaState> = None;
    let mut incumbent = Incumbent::default();
    let mut stall = Stall::new(cfg);

    for k in 1..=cfg.max_outer_iterations {
        explore_cost_into(&cost, grad.as_ref(), &x, set, &mut history, &cfg.explore)?;
        let worst = history.worst_within(&x, set).ok_or(Error::EmptyHistory)?;
        if incumbent.offer(&x, worst, cfg.sigma_min) {
            stall.idle = 0;
        } else if stall.no_progress() {
            let sol = stall.finish(problem, incumbent.resolve(&history, set), k, &mut trace);
            return Ok((sol, trace));
        }
        let s = sigma.get_or_insert_with(|| {
            SigmaState::new(cfg.sigma_init_factor * (worst - cost(&x)), cfg.sigma_min, cfg.sigma_shrink)
        });
        match robust_local_move(&x, &history, &[], s, set, cfg.epsilon)? {
            MoveOutcome::VerifiedMinimum { worst_value, sigma } => {
                trace.records.push(TraceRecord {
                    iteration: k,
                    iterate: x.clone(),
                    branch: Branch::Verify,
                    worst_set_size: 0,
                    constraint_set_size: 0,
                    sigma,
                    rho: 0.0,
                    direction: vec![],
                    worst_cost: worst_value,
                });
                return Ok((finish(problem, x, worst_value, true, k, Termination::Verified), trace));
            }
            MoveOutcome::Move { rho, direction, worst_set_size, worst_value, sigma, .. } => {
                let (rho, displacement) = floored_step(rho, &direction, set, stall.floor)?;
                trace.records.push(TraceRecord {
                    iteration: k,
                    iterate: x.clone(),
                    branch: Branch::CostMove,
                    worst_set_size,
                    constraint_set_size: 0,
                    sigma,
                    rho,
                    direction,
                    worst_cost: worst_value,
                });
                x = add(&x, &displacement);
            }
        }
    }
    let b = incumbent.resolve(&history, set).expect("at least one iteration");
    Ok((finish(problem, b.point, b.worst_cost, true, cfg.max_outer_iterations, Termination::IterationCap), trace))
}

/// Robust descent keeping every constraint (box bounds included) satisfied
/// for all perturbations in the uncertainty set.
pub fn solve_arrtoc(
    problem: &ProblemSpec,
    start: &[f64],
    cfg: &SolverConfig,
) -> Result<(RobustSolution, SolverTrace)> {
    check_start(problem, start, cfg)?;
    let cost = problem.cost();
    let grad = problem.cost_gradient();
    let constraints = problem.all_constraints();
    let set = &problem.uncertainty;
    let enlarged = set.scaled(1.0 + cfg.delta_fraction)?;
    let mut x = start.to_vec();
    let mut history = HistorySet::new();
    let mut violations = ConstraintHistorySet::new();
    let mut trace = SolverTrace::default();
    let mut sigma: Option<SigmaState> = None;
    let mut incumbent = Incumbent::default();
    let mut stall = Stall::new(cfg);
    let mut revisits = Revisits { seen: Vec::new() };
    let mut last_worst = f64::NAN;

    for k in 1..=cfg.max_outer_iterations {
        if revisits.hit(&x, set) {
            let (p, w, feas) = match incumbent.resolve(&history, set) {
                Some(b) => (b.point, b.worst_cost, true),
                None => (x.clone(), last_worst, false),
            };
            return Ok((finish(problem, p, w, feas, k - 1, Termination::Oscillation), trace));
        }
        explore_cost_into(&cost, grad.as_ref(), &x, set, &mut history, &cfg.explore)?;
        let worst = history.worst_within(&x, set).ok_or(Error::EmptyHistory)?;
        last_worst = worst;
        let s = sigma.get_or_insert_with(|| {
            SigmaState::new(cfg.sigma_init_factor * (worst - cost(&x)), cfg.sigma_min, cfg.sigma_shrink)
        });
        let found = explore_constraints(&constraints, &x, &enlarged, &cfg.explore)?;
        violations.merge(probe_shell(&found, &constraints, &x, set)?);
        violations.merge(found);

        let mut inside = Vec::new();
        let mut plus = Vec::new();
        let mut deepest: Vec<Option<(f64, &[f64])>> = vec![None; constraints.len()];
        for v in violations.entries() {
            let delta: Vec<f64> = v.point.iter().zip(&x).map(|(p, c)| p - c).collect();
            if set.strictly_contains(&delta)? {
                inside.push(v.point.clone());
                let slot = &mut deepest[v.constraint_index];
                if slot.is_none_or(|(h, _)| v.value > h) {
                    *slot = Some((v.value, &v.point));
                }
            }
            if enlarged.contains(&delta)? {
                plus.push(v.point.clone());
            }
        }
        inside.sort_by(|a, b| a.partial_cmp(b).unwrap());
        inside.dedup();
        plus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        plus.dedup();

        if !inside.is_empty() {
            let scaled: Vec<Vec<f64>> = inside.iter().map(|p| set.scaled_offset(&x, p)).collect::<Result<_>>()?;
            let steepest: Vec<Vec<f64>> =
                deepest.iter().flatten().map(|(_, p)| set.scaled_offset(&x, p)).collect::<Result<_>>()?;
            let origin = vec![0.0; x.len()];
            match solve_direction(&steepest, &[], &origin, cfg.epsilon) {
                Ok(DirectionResult::Direction { direction, .. }) => {
                    let (rho, displacement) =
                        floored_step(step_size(&scaled, &origin, &direction, 1.0)?, &direction, set, stall.floor)?;
                    trace.records.push(TraceRecord {
                        iteration: k,
                        iterate: x.clone(),
                        branch: Branch::FeasibilityMove,
                        worst_set_size: 0,
                        constraint_set_size: inside.len(),
                        sigma: s.sigma,
                        rho,
                        direction: direction.clone(),
                        worst_cost: worst,
                    });
                    x = add(&x, &displacement);
                    continue;
                }
                Ok(DirectionResult::Infeasible { .. }) | Err(Error::DegenerateDirection) => {
                    let (p, w, feas) = match incumbent.resolve(&history, set) {
                        Some(b) => (b.point, b.worst_cost, true),
                        None => (x.clone(), worst, false),
                    };
                    return Ok((finish(problem, p, w, feas, k, Termination::InfeasibleUnderPerturbation), trace));
                }
                Err(e) => return Err(e),
            }
        }

        if incumbent.offer(&x, worst, cfg.sigma_min) {
            stall.idle = 0;
        } else if stall.no_progress() {
            let sol = stall.finish(problem, incumbent.resolve(&history, set), k, &mut trace);
            return Ok((sol, trace));
        }
        match robust_local_move(&x, &history, &plus, s, set, cfg.epsilon)? {
            MoveOutcome::VerifiedMinimum { worst_value, sigma } => {
                trace.records.push(TraceRecord {
                    iteration: k,
                    iterate: x.clone(),
                    branch: Branch::Verify,
                    worst_set_size: 0,
                    constraint_set_size: plus.len(),
                    sigma,
                    rho: 0.0,
                    direction: vec![],
                    worst_cost: worst_value,
                });
                return Ok((finish(problem, x, worst_value, true, k, Termination::Verified), trace));
            }
            MoveOutcome::Move { rho, direction, worst_set_size, worst_value, sigma, .. } => {
                let (rho, displacement) = floored_step(rho, &direction, set, stall.floor)?;
                trace.records.push(TraceRecord {
                    iteration: k,
                    iterate: x.clone(),
                    branch: Branch::CostMove,
                    worst_set_size,
                    constraint_set_size: plus.len(),
                    sigma,
                    rho,
                    direction,
                    worst_cost: worst_value,
                });
                x = add(&x, &displacement);
            }
        }
    }
    let (p, w, feas) = match incumbent.resolve(&history, set) {
        Some(b) => (b.point, b.worst_cost, true),
        None => (x, last_worst, false),
    };
    Ok((finish(problem, p, w, feas, cfg.max_outer_iterations, Termination::IterationCap), trace))
}

/// Latin-hypercube starting points in the box, reproducible from `seed`.
pub fn box_starts(problem: &ProblemSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![Vec::with_capacity(problem.dimension()); count];
    for (&lo, &hi) in problem.lower.iter().zip(&problem.upper) {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(&mut rng);
        for (x, k) in starts.iter_mut().zip(strata) {
            let u = (k as f64 + rng.random::<f64>()) / count as f64;
            x.push(lo + u * (hi - lo));
        }
    }
    starts
}

/// Runs [`solve_arrtoc`] from several seeded box samples in parallel and
/// keeps the robustly feasible run with the best worst-case estimate.
pub fn solve_multistart(
    problem: &ProblemSpec,
    starts: usize,
    cfg: &SolverConfig,
) -> Result<(RobustSolution, SolverTrace)> {
    if starts == 0 {
        return Err(Error::InvalidParameter { name: "starts", reason: "need at least one start".into() });
    }
    problem.validate()?;
    let runs: Vec<(RobustSolution, SolverTrace)> = box_starts(problem, starts, cfg.seed)
        .par_iter()
        .map(|x0| solve_arrtoc(problem, x0, cfg))
        .collect::<Result<_>>()?;
    let score = |s: &RobustSolution| match problem.sense {
        Sense::Minimize => s.worst_case_estimate,
        Sense::Maximize => -s.worst_case_estimate,
    };
    let best = runs
        .into_iter()
        .min_by(|a, b| {
            (!a.0.feasible_under_perturbation)
                .cmp(&!b.0.feasible_under_perturbation)
                .then(score(&a.0).total_cmp(&score(&b.0)))
        })
        .expect("starts > 0");
    Ok(best)
}

fn grid_offsets(set: &UncertaintySet, per_axis: usize) -> Vec<Vec<f64>> {
    let n = set.dim();
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(n as u32);
    let mut out = Vec::new();
    for idx in 0..total {
        let mut rem = idx;
        let mut w = vec![0.0; n];
        for c in w.iter_mut() {
            *c = -1.0 + 2.0 * (rem % per_axis) as f64 / (per_axis - 1) as f64;
            rem /= per_axis;
        }
        if w.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12 {
            out.push(set.from_unit_ball(&w).expect("dimension"));
        }
    }
    out
}

/// Maximum of `f` over a regular grid of the neighbourhood of `center`.
pub fn brute_force_worst_case(f: &dyn Fn(&[f64]) -> f64, center: &[f64], set: &UncertaintySet, grid_per_axis: usize) -> f64 {
    grid_offsets(set, grid_per_axis)
        .iter()
        .map(|d| f(&add(center, d)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exhaustive min-max over an outer grid of the box, skipping points whose
/// neighbourhood grid meets a constraint violation.
pub fn brute_force_robust_optimum(problem: &ProblemSpec, outer_grid: usize, inner_grid: usize) -> Option<Vec<f64>> {
    let n = problem.dimension();
    let cost = problem.cost();
    let constraints = problem.all_constraints();
    let offsets = grid_offsets(&problem.uncertainty, inner_grid);
    let outer = outer_grid.max(2);
    let total = outer.pow(n as u32);
    (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let t = (rem % outer) as f64 / (outer - 1) as f64;
                    rem /= outer;
                    problem.lower[i] + t * (problem.upper[i] - problem.lower[i])
                })
                .collect();
            let mut worst = f64::NEG_INFINITY;
            for d in &offsets {
                let p = add(&x, d);
                if constraints.iter().any(|h| h(&p) > 0.0) {
                    return None;
                }
                worst = worst.max(cost(&p));
            }
            Some((idx, worst, x))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(_, _, x)| x)
}

/// Nominal optimum: best feasible point of a regular box grid, then polished
/// by a compass search whose step halves down to `1e-9` of the box span.
/// Returns the point and its objective in the problem's own sense.
pub fn nominal_optimum(problem: &ProblemSpec, grid_per_axis: usize) -> Option<(Vec<f64>, f64)> {
    let n = problem.dimension();
    let cost = problem.cost();
    let constraints = problem.constraints.clone();
    let inside = |x: &[f64]| {
        x.iter().zip(problem.lower.iter().zip(&problem.upper)).all(|(v, (l, u))| v >= l && v <= u)
            && constraints.iter().all(|h| h(x) <= 0.0)
    };
    let per = grid_per_axis.max(2);
    let total = per.pow(n as u32);
    let (_, mut best, mut x) = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let t = (rem % per) as f64 / (per - 1) as f64;
                    rem /= per;
                    problem.lower[i] + t * (problem.upper[i] - problem.lower[i])
                })
                .collect();
            inside(&x).then(|| (idx, cost(&x), x))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
    let span: Vec<f64> = problem.lower.iter().zip(&problem.upper).map(|(l, u)| u - l).collect();
    let mut step = 1.0 / (per - 1) as f64;
    while step > 1e-9 {
        let mut moved = false;
        for i in 0..n {
            for s in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] += s * step * span[i];
                if inside(&y) {
                    let c = cost(&y);
                    if c < best {
                        best = c;
                        x = y;
                        moved = true;
                    }
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    let value = match problem.sense {
        Sense::Minimize => best,
        Sense::Maximize => -best,
    };
    Some((x, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(gamma: f64) -> ProblemSpec {
        ProblemSpec {
            name: "bowl".into(),
            objective: Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
            gradient: Some(Arc::new(|x: &[f64]| x.iter().map(|v| 2.0 * v).collect())),
            sense: Sense::Minimize,
            constraints: vec![],
            lower: vec![-3.0, -3.0],
            upper: vec![3.0, 3.0],
            uncertainty: UncertaintySet::sphere(2, gamma).unwrap(),
        }
    }

    #[test]
    fn bowl_converges_to_origin() {
        let (sol, trace) = solve_aro(&bowl(0.3), &[2.0, 2.0], &SolverConfig::default()).unwrap();
        assert!(sol.verified(), "{sol:?}");
        assert!(sol.point.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.05, "{sol:?}");
        assert!(sol.worst_case_estimate >= sol.nominal_value);
        assert!(!trace.records.is_empty());
    }

    #[test]
    fn linear_backoff_from_constraint() {
        let p = ProblemSpec {
            name: "backoff".into(),
            objective: Arc::new(|x: &[f64]| x[0]),
            gradient: None,
            sense: Sense::Minimize,
            constraints: vec![Arc::new(|x: &[f64]| -x[0])],
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
            uncertainty: UncertaintySet::sphere(2, 0.3).unwrap(),
        };
        let (sol, _) = solve_arrtoc(&p, &[0.5, 0.0], &SolverConfig::default()).unwrap();
        assert!(sol.feasible_under_perturbation);
        assert!((sol.point[0] - 0.3).abs() < 0.02, "{sol:?}");
        let x = brute_force_robust_optimum(&p, 81, 21).unwrap();
        assert!((x[0] - 0.3).abs() <= 2.0 / 80.0 + 1e-9, "{x:?}");
    }

    #[test]
    fn brute_force_examples() {
        let set = UncertaintySet::sphere(2, 0.5).unwrap();
        assert_eq!(brute_force_worst_case(&|_| 4.0, &[1.0, 1.0], &set, 21), 4.0);
        let w = brute_force_worst_case(&|x| 3.0 * x[0] + 4.0 * x[1], &[1.0, 1.0], &set, 201);
        assert!((w - (7.0 + 0.5 * 5.0)).abs() < 0.05);
        let x = brute_force_robust_optimum(&bowl(0.3), 61, 21).unwrap();
        assert!(x.iter().all(|v| v.abs() <= 0.1 + 1e-9), "{x:?}");
    }

    #[test]
    fn nominal_optimum_of_bowl() {
        let (x, v) = nominal_optimum(&bowl(0.3), 40).unwrap();
        assert!(x.iter().all(|c| c.abs() < 1e-6), "{x:?}");
        assert!(v < 1e-10);
    }

    #[test]
    fn negation_symmetry() {
        let mut maxp = bowl(0.3);
        maxp.sense = Sense::Maximize;
        maxp.objective = Arc::new(|x: &[f64]| -x.iter().map(|v| v * v).sum::<f64>());
        maxp.gradient = Some(Arc::new(|x: &[f64]| x.iter().map(|v| -2.0 * v).collect()));
        let cfg = SolverConfig::default();
        let (a, ta) = solve_aro(&bowl(0.3), &[1.0, -2.0], &cfg).unwrap();
        let (b, tb) = solve_aro(&maxp, &[1.0, -2.0], &cfg).unwrap();
        assert_eq!(a.point, b.point);
        assert_eq!(ta.records.len(), tb.records.len());
        for (ra, rb) in ta.records.iter().zip(&tb.records) {
            assert_eq!(ra.iterate, rb.iterate);
        }
    }

    #[test]
    fn invalid_inputs() {
        let cfg = SolverConfig::default();
        assert!(solve_aro(&bowl(0.3), &[1.0], &cfg).is_err());
        let bad = SolverConfig { sigma_shrink: 0.9, ..SolverConfig::default() };
        assert!(solve_aro(&bowl(0.3), &[1.0, 1.0], &bad).is_err());
    }
}
