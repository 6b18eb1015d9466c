//! End-to-end case studies: solves, closed-loop batches and summary checks.

use crate::control::{
    bioreactor_batch, estimate_gamma, evaporator_batch, metrics, perturbation_study, BioreactorLoopConfig,
    EvaporatorLoopConfig, Metrics, SimulationResult,
};
use crate::error::{Error, Result};
use crate::plants::{BioreactorParams, CostParams, EnergyBasis, EvaporatorParams, EvaporatorSetpoint};
use crate::problems::{
    bioreactor_problem, bioreactor_training_data, evaporator_problem, evaporator_profit, illustrative_problem,
    ConstraintProfile, CONTROLLER_SETTINGS, EVAPORATOR_NOMINAL,
};
use crate::solver::{brute_force_worst_case, nominal_optimum, solve_arrtoc, solve_multistart, SolverConfig, Termination};
use crate::surrogate;
use crate::uncertainty::UncertaintySet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// One named pass/fail line of a reproduction summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, detail }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllustrativeRow {
    pub label: String,
    pub radii: Vec<f64>,
    pub point: Vec<f64>,
    pub termination: Option<Termination>,
    pub nominal_value: f64,
    /// Lowest objective on a 61-per-axis grid of the row's own neighbourhood.
    pub worst_own: f64,
    /// Lowest objective on the grid of the reference sphere.
    pub worst_reference: f64,
    /// Mean and spread of the objective under uniform draws from the reference sphere.
    pub perturbed_mean: f64,
    pub perturbed_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllustrativeReport {
    pub reference_gamma: f64,
    pub rows: Vec<IllustrativeRow>,
}

/// Nominal optimum plus robust optima for each set of radii, all scored
/// against a sphere of radius `reference_gamma`.
pub fn illustrative_study(
    radii: &[Vec<f64>],
    reference_gamma: f64,
    starts: usize,
    cfg: &SolverConfig,
) -> Result<IllustrativeReport> {
    let reference = UncertaintySet::sphere(2, reference_gamma)?;
    let base = illustrative_problem(reference.clone());
    let f = base.objective.clone();
    let low = |x: &[f64], set: &UncertaintySet| -brute_force_worst_case(&|p| -f(p), x, set, 61);
    let row = |label: String, r: Vec<f64>, point: Vec<f64>, termination| -> Result<IllustrativeRow> {
        let worst_own = match r.iter().all(|v| *v == 0.0) {
            true => f(&point),
            false => low(&point, &UncertaintySet::new(r.clone())?),
        };
        let (mean, std) = perturbation_study(&*f, &point, &reference, 10_000, cfg.seed)?;
        Ok(IllustrativeRow {
            label,
            nominal_value: f(&point),
            worst_own,
            worst_reference: low(&point, &reference),
            perturbed_mean: mean,
            perturbed_std: std,
            radii: r,
            point,
            termination,
        })
    };
    let (x_nom, _) = nominal_optimum(&base, 451).ok_or(Error::EmptyInput)?;
    let mut rows = vec![row("nominal".into(), vec![0.0, 0.0], x_nom, None)?];
    for r in radii {
        let problem = base.with_uncertainty(UncertaintySet::new(r.clone())?);
        let (sol, _) = solve_multistart(&problem, starts, cfg)?;
        let label = format!("robust {}", r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join("x"));
        rows.push(row(label, r.clone(), sol.point, Some(sol.termination))?);
    }
    Ok(IllustrativeReport { reference_gamma, rows })
}

impl IllustrativeReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let nominal = &self.rows[0];
        out.push(check(
            "nominal optimum location",
            dist(&nominal.point, &[2.78, 4.02]) <= 0.05,
            format!("{:.4?} (reference (2.78, 4.02))", nominal.point),
        ));
        out.push(check(
            "nominal optimum value",
            (nominal.nominal_value - 20.93).abs() <= 0.05,
            format!("{:.4} (reference 20.93)", nominal.nominal_value),
        ));
        if let Some(r) = self.rows.iter().find(|r| r.radii == [0.3, 0.3]) {
            out.push(check(
                "robust optimum location",
                dist(&r.point, &[-0.41, 0.15]) <= 0.1,
                format!("{:.4?} (reference (-0.41, 0.15))", r.point),
            ));
            out.push(check(
                "robust optimum value",
                (r.nominal_value - 17.90).abs() <= 0.05,
                format!("{:.4} (reference 17.90)", r.nominal_value),
            ));
            out.push(check(
                "robust point outperforms nominal under perturbation",
                r.perturbed_mean > nominal.perturbed_mean && r.perturbed_std < nominal.perturbed_std,
                format!(
                    "mean {:.3} vs {:.3}, std {:.3} vs {:.3}",
                    r.perturbed_mean, nominal.perturbed_mean, r.perturbed_std, nominal.perturbed_std
                ),
            ));
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "label", "radii", "x", "y", "termination", "nominal_value", "worst_own", "worst_reference",
            "perturbed_mean", "perturbed_std",
        ])?;
        for r in &self.rows {
            out.write_record([
                r.label.clone(),
                r.radii.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";"),
                format!("{}", r.point[0]),
                format!("{}", r.point[1]),
                r.termination.map_or("none".into(), |t| format!("{t:?}")),
                format!("{}", r.nominal_value),
                format!("{}", r.worst_own),
                format!("{}", r.worst_reference),
                format!("{}", r.perturbed_mean),
                format!("{}", r.perturbed_std),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRow {
    pub setpoint: f64,
    pub runs: usize,
    pub washouts: usize,
    pub mean_productivity: f64,
    pub std_productivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioreactorReport {
    pub gp_argmax: f64,
    pub gp_peak: f64,
    pub gamma: f64,
    pub robust_setpoint: f64,
    pub robust_worst: f64,
    pub loops: Vec<LoopRow>,
}

/// Fits the productivity surrogate, solves nominal and robust set-points and
/// runs the seeded closed loop at each of `setpoints`.
pub fn bioreactor_study(
    gamma: f64,
    setpoints: &[f64],
    seeds: &[u64],
    starts: usize,
    cfg: &SolverConfig,
) -> Result<BioreactorReport> {
    let params = BioreactorParams::default();
    let (xs, qs) = bioreactor_training_data(20.0, &params);
    let gp = Arc::new(surrogate::fit(&xs, &qs)?);
    let problem = bioreactor_problem(gp, gamma)?;
    let (x_nom, peak) = nominal_optimum(&problem, 2001).ok_or(Error::EmptyInput)?;
    let (sol, _) = solve_multistart(&problem, starts, cfg)?;
    let loops = setpoints
        .iter()
        .map(|&sp| {
            let runs = bioreactor_batch(&BioreactorLoopConfig { setpoint: sp, ..Default::default() }, seeds)?;
            let ms = runs.iter().map(metrics).collect::<Result<Vec<_>>>()?;
            let n = ms.len().max(1) as f64;
            let mean = ms.iter().map(|m| m.mean_objective).sum::<f64>() / n;
            let std = (ms.iter().map(|m| (m.mean_objective - mean).powi(2)).sum::<f64>() / n).sqrt();
            Ok(LoopRow {
                setpoint: sp,
                runs: ms.len(),
                washouts: ms.iter().filter(|m| m.washout).count(),
                mean_productivity: mean,
                std_productivity: std,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BioreactorReport {
        gp_argmax: x_nom[0],
        gp_peak: peak,
        gamma,
        robust_setpoint: sol.point[0],
        robust_worst: sol.worst_case_estimate,
        loops,
    })
}

impl BioreactorReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = vec![
            check("surrogate argmax", (self.gp_argmax - 9.0).abs() <= 0.3, format!("{:.3} (reference 9.0)", self.gp_argmax)),
            check("surrogate peak", (self.gp_peak - 4.1).abs() <= 0.2, format!("{:.3} (reference 4.1)", self.gp_peak)),
            check(
                "robust set-point",
                (self.robust_setpoint - 8.5).abs() <= 0.3,
                format!("{:.3} at gamma {} (reference 8.5)", self.robust_setpoint, self.gamma),
            ),
        ];
        let at = |sp: f64| self.loops.iter().find(|l| (l.setpoint - sp).abs() < 1e-9);
        if let Some(l) = at(9.0) {
            out.push(check(
                "washouts at 9.0",
                l.washouts * 10 >= 9 * l.runs,
                format!("{}/{}", l.washouts, l.runs),
            ));
        }
        for sp in [8.5, 8.0] {
            if let Some(l) = at(sp) {
                out.push(check(&format!("washouts at {sp:.1}"), l.washouts == 0, format!("{}/{}", l.washouts, l.runs)));
            }
        }
        if let (Some(a), Some(b)) = (at(8.5), at(8.0)) {
            let ratio = a.mean_productivity / b.mean_productivity;
            out.push(check(
                "productivity 8.5 over 8.0",
                ratio >= 1.05,
                format!("{:.4} / {:.4} = {ratio:.4}", a.mean_productivity, b.mean_productivity),
            ));
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["setpoint", "runs", "washouts", "mean_productivity", "std_productivity"])?;
        for l in &self.loops {
            out.write_record([
                format!("{}", l.setpoint),
                l.runs.to_string(),
                l.washouts.to_string(),
                format!("{}", l.mean_productivity),
                format!("{}", l.std_productivity),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSummary {
    pub mean_profit: f64,
    pub violation_fraction: f64,
    pub aborted_runs: usize,
    /// Mean per-run deviation bound, ordered `[P, h, x_B]`.
    pub gamma: Vec<f64>,
}

fn summarize(runs: &[SimulationResult]) -> Result<LoopSummary> {
    let ms: Vec<Metrics> = runs.iter().map(metrics).collect::<Result<_>>()?;
    let n = ms.len().max(1) as f64;
    let gammas: Vec<Vec<f64>> = runs.iter().map(|r| estimate_gamma(r, 0.1)).collect();
    let width = gammas.first().map_or(0, Vec::len);
    Ok(LoopSummary {
        mean_profit: ms.iter().map(|m| m.mean_objective).sum::<f64>() / n,
        violation_fraction: ms.iter().map(|m| m.violation_fraction).sum::<f64>() / n,
        aborted_runs: ms.iter().filter(|m| m.aborted).count(),
        gamma: (0..width).map(|i| gammas.iter().map(|g| g[i]).sum::<f64>() / n).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRow {
    pub id: usize,
    pub radii: [f64; 3],
    pub robust_point: Vec<f64>,
    pub robust_profit: f64,
    pub termination: Termination,
    pub reference_point: [f64; 3],
    pub reference_profit: f64,
    pub nominal_loop: LoopSummary,
    pub robust_loop: LoopSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorReport {
    pub nominal_point: Vec<f64>,
    pub nominal_profit: f64,
    /// Profit at the reference nominal set-point with the energy cost
    /// charged on the evaporator temperature.
    pub literal_profit: f64,
    pub settings: Vec<SettingRow>,
}

/// Nominal solve, one robust solve per tuned controller setting, and
/// closed-loop batches at both set-points for every setting.
pub fn evaporator_study(seeds: &[u64], profile: ConstraintProfile, cfg: &SolverConfig) -> Result<EvaporatorReport> {
    let costs = CostParams::default();
    let nominal = evaporator_problem(100.0, 0.2, [1e-6; 3], profile, costs)?;
    let (x_nom, nominal_profit) = nominal_optimum(&nominal, 41).ok_or(Error::EmptyInput)?;
    let literal = CostParams { energy_basis: EnergyBasis::EvaporatorTemperature, ..costs };
    let ref_nom = [EVAPORATOR_NOMINAL.x_b, EVAPORATOR_NOMINAL.h, EVAPORATOR_NOMINAL.p];
    let literal_profit = evaporator_profit(&ref_nom, 100.0, 0.2, &EvaporatorParams::default(), &literal);
    let nominal_sp = EvaporatorSetpoint { x_b: x_nom[0], h: x_nom[1], p: x_nom[2] };
    let settings = CONTROLLER_SETTINGS
        .par_iter()
        .map(|s| {
            let problem = evaporator_problem(100.0, 0.2, s.radii(), profile, costs)?;
            let (sol, _) = solve_arrtoc(&problem, &x_nom, cfg)?;
            let robust_sp = EvaporatorSetpoint { x_b: sol.point[0], h: sol.point[1], p: sol.point[2] };
            let batch = |sp| evaporator_batch(&EvaporatorLoopConfig::new(sp, s.gains, profile), seeds);
            let r = s.robust_setpoint;
            Ok(SettingRow {
                id: s.id,
                radii: s.radii(),
                robust_profit: sol.nominal_value,
                termination: sol.termination,
                reference_point: [r.x_b, r.h, r.p],
                reference_profit: s.robust_profit,
                nominal_loop: summarize(&batch(nominal_sp)?)?,
                robust_loop: summarize(&batch(robust_sp)?)?,
                robust_point: sol.point,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaporatorReport { nominal_point: x_nom, nominal_profit, literal_profit, settings })
}

impl EvaporatorReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = vec![check(
            "nominal profit",
            (self.nominal_profit - 89.03).abs() <= 0.5,
            format!(
                "{:.3} at {:.4?} (reference 89.03; evaporator-temperature energy cost gives {:.2})",
                self.nominal_profit, self.nominal_point, self.literal_profit
            ),
        )];
        for s in &self.settings {
            let d = [
                (s.robust_point[0] - s.reference_point[0]).abs(),
                (s.robust_point[1] - s.reference_point[1]).abs(),
                (s.robust_point[2] - s.reference_point[2]).abs(),
            ];
            out.push(check(
                &format!("setting {} robust set-point", s.id),
                d[0] <= 0.03 && d[1] <= 0.05 && d[2] <= 300.0 && (s.robust_profit - s.reference_profit).abs() <= 1.5,
                format!(
                    "({:.4}, {:.4}, {:.1}) profit {:.2} vs ({}, {}, {}) {:.2}",
                    s.robust_point[0],
                    s.robust_point[1],
                    s.robust_point[2],
                    s.robust_profit,
                    s.reference_point[0],
                    s.reference_point[1],
                    s.reference_point[2],
                    s.reference_profit
                ),
            ));
            out.push(check(
                &format!("setting {} violation ordering", s.id),
                s.robust_loop.violation_fraction < s.nominal_loop.violation_fraction,
                format!("robust {:.4} vs nominal {:.4}", s.robust_loop.violation_fraction, s.nominal_loop.violation_fraction),
            ));
        }
        if let Some(s) = self.settings.iter().find(|s| s.id == 1) {
            let ratio = s.robust_loop.mean_profit / s.nominal_loop.mean_profit;
            out.push(check(
                "setting 1 profit ratio",
                s.nominal_loop.mean_profit > 0.0 && ratio >= 1.3,
                format!("robust {:.2} vs nominal {:.2} (ratio {ratio:.2})", s.robust_loop.mean_profit, s.nominal_loop.mean_profit),
            ));
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "setting", "gamma_x_B", "gamma_h", "gamma_P", "x_B", "h", "P", "profit", "termination", "ref_x_B", "ref_h",
            "ref_P", "ref_profit", "nominal_mean_profit", "nominal_violation", "robust_mean_profit", "robust_violation",
            "nominal_gamma_P", "nominal_gamma_h", "nominal_gamma_x_B",
        ])?;
        for s in &self.settings {
            let mut rec = vec![s.id.to_string()];
            rec.extend(s.radii.iter().map(|v| format!("{v}")));
            rec.extend(s.robust_point.iter().map(|v| format!("{v}")));
            rec.push(format!("{}", s.robust_profit));
            rec.push(format!("{:?}", s.termination));
            rec.extend(s.reference_point.iter().map(|v| format!("{v}")));
            rec.push(format!("{}", s.reference_profit));
            rec.push(format!("{}", s.nominal_loop.mean_profit));
            rec.push(format!("{}", s.nominal_loop.violation_fraction));
            rec.push(format!("{}", s.robust_loop.mean_profit));
            rec.push(format!("{}", s.robust_loop.violation_fraction));
            rec.extend(s.nominal_loop.gamma.iter().map(|v| format!("{v}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}
