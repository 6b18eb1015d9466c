//! Adversarially robust set-point selection under implementation errors,
//! plus the closed-loop process models used to check the chosen set-points.
//!
//! The optimizer searches for points whose worst-case cost over an
//! ellipsoidal neighbourhood is locally minimal, while keeping every
//! constraint satisfied for all perturbations in that neighbourhood.

pub mod control;
pub mod error;
pub mod exploration;
pub mod plants;
pub mod problems;
pub mod report;
pub mod robust_move;
pub mod solver;
pub mod studies;
pub mod surrogate;
pub mod uncertainty;

pub use error::{Error, Result};
pub use solver::{ProblemSpec, RobustSolution, SolverConfig, SolverTrace};
pub use uncertainty::UncertaintySet;

use std::sync::Arc;

/// Scalar function of a decision vector.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Gradient of a scalar function.
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
