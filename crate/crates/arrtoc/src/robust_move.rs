//! Descent moves for the worst-case cost.
//!
//! The worst neighbours of the current iterate define directions that a
//! move must point away from. The best such direction solves
//! `min_{‖d‖≤1} max_i d·ûᵢ`, whose optimal value is `−‖p‖` for `p` the
//! minimum-norm point of `conv{ûᵢ}`; `p` is found with Wolfe's algorithm.
//! All geometry here is in scaled unit-ball coordinates.

use crate::error::{Error, Result};
use crate::exploration::HistorySet;
use crate::uncertainty::UncertaintySet;
use crate::{dot, norm};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const MNP_TOL: f64 = 1e-8;
const DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WorstSet {
    pub points: Vec<Vec<f64>>,
    pub threshold_used: f64,
    pub worst_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaState {
    pub sigma: f64,
    pub sigma_min: f64,
    pub shrink_factor: f64,
}

impl SigmaState {
    pub fn new(sigma: f64, sigma_min: f64, shrink_factor: f64) -> Self {
        Self { sigma, sigma_min, shrink_factor }
    }

    /// Upper bound on the number of shrinks before `σ < σ_min`.
    pub fn shrink_bound(&self) -> usize {
        if self.sigma < self.sigma_min {
            return 0;
        }
        ((self.sigma / self.sigma_min).ln() / self.shrink_factor.ln()).ceil() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectionResult {
    Direction { direction: Vec<f64>, margin: f64 },
    Infeasible { hull_distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MoveOutcome {
    Move {
        rho: f64,
        /// Unit direction in scaled coordinates.
        direction: Vec<f64>,
        /// Step in original coordinates.
        displacement: Vec<f64>,
        margin: f64,
        worst_set_size: usize,
        worst_value: f64,
        sigma: f64,
    },
    VerifiedMinimum { worst_value: f64, sigma: f64 },
}

/// Entries inside the neighbourhood of `center` whose value is within
/// `sigma` of the largest such value.
pub fn build_worst_set(
    history: &HistorySet,
    center: &[f64],
    set: &UncertaintySet,
    sigma: f64,
) -> Result<WorstSet> {
    let worst = history.worst_within(center, set).ok_or(Error::EmptyHistory)?;
    let threshold = worst - sigma;
    let points = history
        .within(center, set)
        .filter(|e| e.value >= threshold)
        .map(|e| e.point.clone())
        .collect();
    Ok(WorstSet { points, threshold_used: threshold, worst_value: worst })
}

fn affine_minimizer(pts: &[&[f64]]) -> Option<Vec<f64>> {
    let k = pts.len();
    let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..k {
            m[(i, j)] = dot(pts[i], pts[j]);
        }
        m[(i, k)] = 1.0;
        m[(k, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .or_else(|| m.svd(true, true).solve(&rhs, 1e-14).ok())?;
    Some(sol.iter().take(k).copied().collect())
}

fn combine(pts: &[Vec<f64>], idx: &[usize], lam: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; pts[0].len()];
    for (&i, &l) in idx.iter().zip(lam) {
        for (xc, pc) in x.iter_mut().zip(&pts[i]) {
            *xc += l * pc;
        }
    }
    x
}

/// Point of `conv(points)` closest to the origin (Wolfe's algorithm).
pub fn min_norm_point(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = points.first().ok_or(Error::EmptyInput)?;
    let n = first.len();
    for p in points {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.len() });
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { point: p.clone() });
        }
    }
    let m = points.len();
    let scale = points.iter().map(|p| dot(p, p)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let start = (0..m)
        .min_by(|&a, &b| dot(&points[a], &points[a]).total_cmp(&dot(&points[b], &points[b])))
        .unwrap();
    let mut idx = vec![start];
    let mut lam = vec![1.0];
    let mut x = points[start].clone();

    for _ in 0..(10 * m + 100) {
        let xx = dot(&x, &x);
        let (j, xpj) = (0..m)
            .map(|i| (i, dot(&x, &points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xpj <= MNP_TOL * scale || idx.contains(&j) {
            break;
        }
        idx.push(j);
        lam.push(0.0);
        loop {
            let subset: Vec<&[f64]> = idx.iter().map(|&i| points[i].as_slice()).collect();
            let Some(alpha) = affine_minimizer(&subset) else { break };
            if alpha.iter().all(|&a| a > DEGENERATE) {
                lam = alpha;
                break;
            }
            let theta = lam
                .iter()
                .zip(&alpha)
                .filter(|(_, &a)| a <= DEGENERATE)
                .map(|(&l, &a)| if l - a > 0.0 { l / (l - a) } else { 0.0 })
                .fold(1.0, f64::min);
            for (l, a) in lam.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            let mut keep_idx = Vec::new();
            let mut keep_lam = Vec::new();
            let drop_at = lam
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            for (k, (&i, &l)) in idx.iter().zip(&lam).enumerate() {
                if l > DEGENERATE && k != drop_at {
                    keep_idx.push(i);
                    keep_lam.push(l);
                }
            }
            let total: f64 = keep_lam.iter().sum();
            idx = keep_idx;
            lam = keep_lam.iter().map(|l| l / total).collect();
            if idx.len() == 1 {
                lam = vec![1.0];
                break;
            }
        }
        x = combine(points, &idx, &lam);
    }
    Ok(x)
}

fn unit_offsets(points: &[Vec<f64>], center: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != center.len() {
            return Err(Error::DimensionMismatch { expected: center.len(), got: p.len() });
        }
        let u: Vec<f64> = p.iter().zip(center).map(|(a, b)| a - b).collect();
        let n = norm(&u);
        if n < DEGENERATE {
            log::warn!("dropping neighbour that coincides with the centre");
            continue;
        }
        out.push(u.iter().map(|c| c / n).collect());
    }
    Ok(out)
}

/// Unit direction making an angle of at least `acos(−ε)` with every offset
/// `xᵢ − center`, or `Infeasible` when none exists.
pub fn solve_direction(
    cost_points: &[Vec<f64>],
    constraint_points: &[Vec<f64>],
    center: &[f64],
    epsilon: f64,
) -> Result<DirectionResult> {
    if cost_points.is_empty() && constraint_points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter { name: "epsilon", reason: format!("{epsilon} must be positive") });
    }
    let mut units = unit_offsets(cost_points, center)?;
    units.extend(unit_offsets(constraint_points, center)?);
    if units.is_empty() {
        return Err(Error::DegenerateDirection);
    }
    let p = min_norm_point(&units)?;
    let pn = norm(&p);
    if pn < epsilon {
        return Ok(DirectionResult::Infeasible { hull_distance: pn });
    }
    let d: Vec<f64> = p.iter().map(|c| -c / pn).collect();
    let worst = units.iter().map(|u| dot(u, &d)).fold(f64::NEG_INFINITY, f64::max);
    if worst > -epsilon {
        return Ok(DirectionResult::Infeasible { hull_distance: pn });
    }
    Ok(DirectionResult::Direction { direction: d, margin: -pn })
}

/// Smallest step along `direction` that leaves every point on or outside
/// the ball of `radius` around the new centre.
pub fn step_size(points: &[Vec<f64>], center: &[f64], direction: &[f64], radius: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let tol = (1e-9 * radius * radius).max(1e-12);
    let mut rho: f64 = 0.0;
    for p in points {
        if p.len() != center.len() || direction.len() != center.len() {
            return Err(Error::DimensionMismatch { expected: center.len(), got: p.len() });
        }
        let u: Vec<f64> = p.iter().zip(center).map(|(a, b)| a - b).collect();
        let b = dot(&u, direction);
        let rad = b * b - dot(&u, &u) + radius * radius;
        if rad < -tol {
            return Err(Error::OutsideNeighbourhood { radicand: rad });
        }
        rho = rho.max(b + rad.max(0.0).sqrt());
    }
    Ok(rho)
}

/// One robust local move: shrink `σ` until a descent direction exists,
/// or report a verified robust local minimum once `σ < σ_min`.
pub fn robust_local_move(
    center: &[f64],
    history: &HistorySet,
    constraint_plus: &[Vec<f64>],
    sigma: &mut SigmaState,
    set: &UncertaintySet,
    epsilon: f64,
) -> Result<MoveOutcome> {
    let origin = vec![0.0; center.len()];
    let cons: Vec<Vec<f64>> =
        constraint_plus.iter().map(|p| set.scaled_offset(center, p)).collect::<Result<_>>()?;
    loop {
        let ws = build_worst_set(history, center, set, sigma.sigma)?;
        let cost: Vec<Vec<f64>> = ws.points.iter().map(|p| set.scaled_offset(center, p)).collect::<Result<_>>()?;
        let result = match solve_direction(&cost, &cons, &origin, epsilon) {
            Err(Error::DegenerateDirection) => DirectionResult::Infeasible { hull_distance: 0.0 },
            other => other?,
        };
        match result {
            DirectionResult::Direction { direction, margin } => {
                let movable: Vec<Vec<f64>> = cost.into_iter().filter(|u| norm(u) >= DEGENERATE).collect();
                let rho = if movable.is_empty() { 0.0 } else { step_size(&movable, &origin, &direction, 1.0)? };
                let w: Vec<f64> = direction.iter().map(|d| rho * d).collect();
                return Ok(MoveOutcome::Move {
                    rho,
                    displacement: set.from_unit_ball(&w)?,
                    direction,
                    margin,
                    worst_set_size: ws.points.len(),
                    worst_value: ws.worst_value,
                    sigma: sigma.sigma,
                });
            }
            DirectionResult::Infeasible { .. } => {
                sigma.sigma /= sigma.shrink_factor;
                if sigma.sigma < sigma.sigma_min {
                    return Ok(MoveOutcome::VerifiedMinimum { worst_value: ws.worst_value, sigma: sigma.sigma });
                }
            }
        }
    }
}
