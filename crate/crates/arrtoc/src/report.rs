//! Run manifests and serializable result summaries.

use crate::control::Metrics;
use crate::solver::{RobustSolution, SolverTrace};
use serde::{Deserialize, Serialize};

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const SOLUTION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub benchmark: Option<String>,
    pub config: String,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    /// `(file name, sha256 hex)` per written artifact.
    pub artifacts: Vec<(String, String)>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub schema_version: u32,
    pub benchmark: String,
    pub radii: Vec<f64>,
    pub start: Vec<f64>,
    pub solution: RobustSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub plant: String,
    pub runs: Vec<RunMetrics>,
    pub washout_count: usize,
    pub mean_objective: f64,
    pub mean_violation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub metrics: Metrics,
    pub gamma: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn new(plant: &str, runs: Vec<RunMetrics>) -> Self {
        let n = runs.len().max(1) as f64;
        Self {
            schema_version: METRICS_SCHEMA_VERSION,
            plant: plant.into(),
            washout_count: runs.iter().filter(|r| r.metrics.washout).count(),
            mean_objective: runs.iter().map(|r| r.metrics.mean_objective).sum::<f64>() / n,
            mean_violation_fraction: runs.iter().map(|r| r.metrics.violation_fraction).sum::<f64>() / n,
            runs,
        }
    }
}

/// Trace as CSV: one row per outer iteration.
pub fn write_trace_csv<W: std::io::Write>(trace: &SolverTrace, w: W) -> crate::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "iterate", "branch", "worst_set_size", "constraint_set_size", "sigma", "rho", "direction", "worst_cost"])?;
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";");
    for r in &trace.records {
        let branch = match r.branch {
            crate::solver::Branch::CostMove => "cost-move",
            crate::solver::Branch::FeasibilityMove => "feasibility-move",
            crate::solver::Branch::Verify => "verify",
        };
        out.write_record([
            r.iteration.to_string(),
            join(&r.iterate),
            branch.to_string(),
            r.worst_set_size.to_string(),
            r.constraint_set_size.to_string(),
            format!("{}", r.sigma),
            format!("{}", r.rho),
            join(&r.direction),
            format!("{}", r.worst_cost),
        ])?;
    }
    out.flush()?;
    Ok(())
}
