//! Multi-start neighbourhood exploration.
//!
//! Each exploration launches `n + 1` projected gradient ascents inside the
//! neighbourhood of a centre: one from the centre itself and one along each
//! coordinate axis, offset towards the locally increasing side. Every iterate
//! is recorded, so the resulting history doubles as a sample of the
//! neighbourhood that later iterations can reuse.

use crate::error::{Error, Result};
use crate::uncertainty::UncertaintySet;
use crate::{norm, GradientFn, ScalarFn};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Accumulated evaluations with duplicate points suppressed.
#[derive(Debug, Clone, Default)]
pub struct HistorySet {
    entries: Vec<Evaluation>,
    keys: HashSet<Vec<i64>>,
}

fn key(point: &[f64]) -> Vec<i64> {
    point.iter().map(|x| (x / DEDUP_TOL).round() as i64).collect()
}

impl HistorySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless an equal point (to 1e-12) is already present.
    pub fn insert(&mut self, eval: Evaluation) -> bool {
        if self.keys.insert(key(&eval.point)) {
            self.entries.push(eval);
            true
        } else {
            false
        }
    }

    pub fn extend(&mut self, evals: impl IntoIterator<Item = Evaluation>) {
        for e in evals {
            self.insert(e);
        }
    }

    pub fn entries(&self) -> &[Evaluation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries inside the neighbourhood of `center`.
    pub fn within<'a>(
        &'a self,
        center: &'a [f64],
        set: &'a UncertaintySet,
    ) -> impl Iterator<Item = &'a Evaluation> + 'a {
        self.entries
            .iter()
            .filter(move |e| set.neighbourhood_contains(center, &e.point).unwrap_or(false))
    }

    /// Largest recorded value inside the neighbourhood of `center`.
    pub fn worst_within(&self, center: &[f64], set: &UncertaintySet) -> Option<f64> {
        self.within(center, set).map(|e| e.value).reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub point: Vec<f64>,
    pub constraint_index: usize,
    pub value: f64,
}

/// Points at which some constraint was found violated (`h > 0`).
#[derive(Debug, Clone, Default)]
pub struct ConstraintHistorySet {
    entries: Vec<ConstraintViolation>,
    keys: HashSet<(usize, Vec<i64>)>,
}

impl ConstraintHistorySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the entry if it is a violation and not already present.
    pub fn insert(&mut self, v: ConstraintViolation) -> bool {
        if !(v.value > 0.0) {
            return false;
        }
        if self.keys.insert((v.constraint_index, key(&v.point))) {
            self.entries.push(v);
            true
        } else {
            false
        }
    }

    pub fn merge(&mut self, other: ConstraintHistorySet) {
        for v in other.entries {
            self.insert(v);
        }
    }

    pub fn entries(&self) -> &[ConstraintViolation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreConfig {
    pub init_offset_fraction: f64,
    pub init_step_fraction: f64,
    pub step_decay: f64,
    pub max_ascent_steps: usize,
    pub fd_step: f64,
    /// Also start against the gradient sign on every axis (`2n + 1` ascents).
    pub mirrored_starts: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            init_offset_fraction: 1.0 / 3.0,
            init_step_fraction: 0.2,
            step_decay: 0.99,
            max_ascent_steps: 100,
            fd_step: 1e-6,
            mirrored_starts: true,
        }
    }
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: format!("{v} not in (0, 1)") })
            }
        };
        frac("init_offset_fraction", self.init_offset_fraction)?;
        frac("init_step_fraction", self.init_step_fraction)?;
        frac("step_decay", self.step_decay)?;
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fd_step",
                reason: format!("{} must be positive", self.fd_step),
            });
        }
        Ok(())
    }
}

/// Central differences with per-axis step `fd_step·max(1, |xᵢ|)`.
pub fn finite_diff_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { point: x.to_vec() });
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

fn gradient_at(f: &ScalarFn, grad: Option<&GradientFn>, x: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    match grad {
        Some(g) => {
            let v = g(x);
            if v.iter().all(|c| c.is_finite()) {
                Ok(v)
            } else {
                Err(Error::NonFinite { point: x.to_vec() })
            }
        }
        None => finite_diff_gradient(f.as_ref(), x, fd_step),
    }
}

/// Diminishing-step gradient ascent of `f(center + Δx)` over the set.
///
/// Iterates live in scaled coordinates; a step is `α·g/max(1, ‖g‖)` with `g`
/// the scaled gradient, and iterates leaving the unit ball are pulled back
/// radially. The returned evaluations are the visited iterates, starting
/// with `start_delta` itself. A non-finite value ends the ascent early.
pub fn projected_ascent(
    f: &ScalarFn,
    grad: Option<&GradientFn>,
    start_delta: &[f64],
    set: &UncertaintySet,
    center: &[f64],
    cfg: &ExploreConfig,
) -> Result<Vec<Evaluation>> {
    if !set.contains(start_delta)? {
        return Err(Error::InvalidParameter {
            name: "start_delta",
            reason: "outside the uncertainty set".into(),
        });
    }
    let radii = set.radii();
    let mut w = set.to_unit_ball(start_delta)?;
    let mut x = set.offset_point(center, &w)?;
    let mut out = Vec::new();
    let fx = f(&x);
    if !fx.is_finite() {
        return Ok(out);
    }
    out.push(Evaluation { point: x.clone(), value: fx });

    let mut alpha = cfg.init_step_fraction;
    for _ in 0..cfg.max_ascent_steps {
        if alpha < 1e-6 {
            break;
        }
        let Ok(gx) = gradient_at(f, grad, &x, cfg.fd_step) else { break };
        let gw: Vec<f64> = gx.iter().zip(radii).map(|(g, r)| g * r).collect();
        let gn = norm(&gw);
        if gn == 0.0 {
            break;
        }
        let scale = alpha / gn.max(1.0);
        let mut next: Vec<f64> = w.iter().zip(&gw).map(|(w, g)| w + scale * g).collect();
        let nn = norm(&next);
        if nn > 1.0 {
            next.iter_mut().for_each(|c| *c /= nn);
        }
        let moved = norm(&next.iter().zip(&w).map(|(a, b)| a - b).collect::<Vec<_>>());
        if moved < 1e-12 {
            break;
        }
        w = next;
        x = set.offset_point(center, &w)?;
        let fx = f(&x);
        if !fx.is_finite() {
            break;
        }
        out.push(Evaluation { point: x.clone(), value: fx });
        alpha *= cfg.step_decay;
    }
    Ok(out)
}

/// Start offsets (original coordinates) of the `n + 1` ascents.
pub fn start_offsets(
    f: &ScalarFn,
    grad: Option<&GradientFn>,
    center: &[f64],
    set: &UncertaintySet,
    cfg: &ExploreConfig,
) -> Result<Vec<Vec<f64>>> {
    let n = center.len();
    let g = gradient_at(f, grad, center, cfg.fd_step)?;
    let mut starts = vec![vec![0.0; n]];
    for i in 0..n {
        let mut w = vec![0.0; n];
        w[i] = if g[i] < 0.0 { -cfg.init_offset_fraction } else { cfg.init_offset_fraction };
        starts.push(set.from_unit_ball(&w)?);
    }
    if cfg.mirrored_starts {
        for i in 0..n {
            let mut w = vec![0.0; n];
            w[i] = if g[i] < 0.0 { cfg.init_offset_fraction } else { -cfg.init_offset_fraction };
            starts.push(set.from_unit_ball(&w)?);
        }
    }
    Ok(starts)
}

fn run_ascents(
    f: &ScalarFn,
    grad: Option<&GradientFn>,
    center: &[f64],
    set: &UncertaintySet,
    cfg: &ExploreConfig,
) -> Result<Vec<Vec<Evaluation>>> {
    cfg.validate()?;
    if center.len() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), got: center.len() });
    }
    if !f(center).is_finite() {
        return Err(Error::NonFinite { point: center.to_vec() });
    }
    start_offsets(f, grad, center, set, cfg)?
        .iter()
        .map(|s| projected_ascent(f, grad, s, set, center, cfg))
        .collect()
}

/// Explores the neighbourhood of `center` and adds the evaluations to `history`.
pub fn explore_cost_into(
    f: &ScalarFn,
    grad: Option<&GradientFn>,
    center: &[f64],
    set: &UncertaintySet,
    history: &mut HistorySet,
    cfg: &ExploreConfig,
) -> Result<usize> {
    let runs = run_ascents(f, grad, center, set, cfg)?;
    let launched = runs.len();
    for run in runs {
        history.extend(run);
    }
    Ok(launched)
}

/// `prev ∪` all evaluations of a fresh multi-start exploration around `center`.
pub fn explore_cost(
    f: &ScalarFn,
    grad: Option<&GradientFn>,
    center: &[f64],
    set: &UncertaintySet,
    prev: &HistorySet,
    cfg: &ExploreConfig,
) -> Result<HistorySet> {
    let mut h = prev.clone();
    explore_cost_into(f, grad, center, set, &mut h, cfg)?;
    Ok(h)
}

/// Runs the same multi-start ascent on every constraint and keeps violations.
pub fn explore_constraints(
    constraints: &[ScalarFn],
    center: &[f64],
    set: &UncertaintySet,
    cfg: &ExploreConfig,
) -> Result<ConstraintHistorySet> {
    let mut out = ConstraintHistorySet::new();
    for (j, h) in constraints.iter().enumerate() {
        for run in run_ascents(h, None, center, set, cfg)? {
            for e in run {
                out.insert(ConstraintViolation { point: e.point, constraint_index: j, value: e.value });
            }
        }
    }
    Ok(out)
}
