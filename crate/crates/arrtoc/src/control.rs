//! PI loops, disturbance signals and closed-loop simulations.

use crate::error::{Error, Result};
use crate::plants::{
    self, BioreactorParams, BioreactorState, CostParams, EvaporatorDisturbances, EvaporatorInputs, EvaporatorParams,
    EvaporatorSetpoint, EvaporatorState, OperatingPoint,
};
use crate::problems::{ConstraintProfile, CLOSED_LOOP_PRESSURE_MIN, LEVEL_BOUNDS, PRESSURE_MAX, PRODUCT_MAX, STEAM_MAX};
use crate::uncertainty::UncertaintySet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiController {
    pub kc: f64,
    pub ki: f64,
    pub setpoint: f64,
    pub integral: f64,
    pub bias: f64,
    pub lo: f64,
    pub hi: f64,
    /// +1 if raising the output raises the measurement, else −1.
    pub sign: f64,
}

impl PiController {
    pub fn new(kc: f64, ki: f64, setpoint: f64, bias: f64, limits: (f64, f64), sign: f64) -> Result<Self> {
        if !(limits.0 < limits.1) {
            return Err(Error::InvalidParameter { name: "limits", reason: format!("{limits:?}") });
        }
        Ok(Self { kc, ki, setpoint, integral: 0.0, bias, lo: limits.0, hi: limits.1, sign: sign.signum() })
    }

    /// Output for this sample; the integral only accumulates while the
    /// unclamped output is inside the limits.
    pub fn update(&mut self, measurement: f64, dt: f64) -> f64 {
        let e = self.setpoint - measurement;
        let raw = self.bias + self.sign * (self.kc * e + self.ki * self.integral);
        if raw >= self.lo && raw <= self.hi {
            self.integral += e * dt;
        }
        raw.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceKind {
    Constant { value: f64 },
    /// Redrawn from `N(mean, std)` every `hold` time units.
    GaussianHold { mean: f64, std: f64, hold: f64 },
    /// `n_steps` equal-length levels over `horizon`, each drawn from `N(mean, std)`.
    StepSequence { n_steps: usize, mean: f64, std: f64, horizon: f64 },
}

impl DisturbanceKind {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::GaussianHold { mean, .. } | Self::StepSequence { mean, .. } => *mean,
        }
    }

    pub fn without_noise(&self) -> Self {
        Self::Constant { value: self.mean() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSignal {
    pub kind: DisturbanceKind,
    pub seed: u64,
}

/// A realized disturbance: piecewise-constant levels on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceTrack {
    levels: Vec<f64>,
    interval: f64,
}

impl DisturbanceSignal {
    pub fn new(kind: DisturbanceKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    /// Draws all levels needed to cover `[0, horizon]`.
    pub fn realize(&self, horizon: f64) -> Result<DisturbanceTrack> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = |mean: f64, std: f64, n: usize| -> Result<Vec<f64>> {
            let dist = Normal::new(mean, std)
                .map_err(|e| Error::InvalidParameter { name: "std", reason: e.to_string() })?;
            Ok((0..n).map(|_| dist.sample(&mut rng).max(0.0)).collect())
        };
        match self.kind {
            DisturbanceKind::Constant { value } => Ok(DisturbanceTrack { levels: vec![value], interval: f64::INFINITY }),
            DisturbanceKind::GaussianHold { mean, std, hold } => {
                if !(hold > 0.0) {
                    return Err(Error::InvalidParameter { name: "hold", reason: format!("{hold} must be positive") });
                }
                let n = (horizon / hold).floor() as usize + 1;
                Ok(DisturbanceTrack { levels: draw(mean, std, n)?, interval: hold })
            }
            DisturbanceKind::StepSequence { n_steps, mean, std, horizon: h } => {
                if n_steps == 0 || !(h > 0.0) {
                    return Err(Error::InvalidParameter { name: "n_steps", reason: "must be positive".into() });
                }
                Ok(DisturbanceTrack { levels: draw(mean, std, n_steps)?, interval: h / n_steps as f64 })
            }
        }
    }
}

/// Value of the realized disturbance at time `t`.
pub fn sample_disturbance(track: &DisturbanceTrack, t: f64) -> f64 {
    track.sample(t)
}

impl DisturbanceTrack {
    pub fn sample(&self, t: f64) -> f64 {
        let k = if self.interval.is_finite() { (t.max(0.0) / self.interval + 1e-9).floor() as usize } else { 0 };
        self.levels[k.min(self.levels.len() - 1)]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledVariable {
    pub name: String,
    pub column: usize,
    pub setpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// Column names; the first is always `time`.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Instantaneous objective per row, before zeroing on violations.
    pub objective: Vec<f64>,
    pub violation: Vec<bool>,
    pub controlled: Vec<ControlledVariable>,
    pub washout: bool,
    pub abort: Option<String>,
    /// Samples a complete run would have produced.
    pub planned_samples: usize,
}

impl SimulationResult {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn time(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r[0])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = self.columns.clone();
        header.push("objective".into());
        header.push("violation".into());
        out.write_record(&header)?;
        for ((row, obj), v) in self.rows.iter().zip(&self.objective).zip(&self.violation) {
            let mut rec: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            rec.push(format!("{obj}"));
            rec.push(if *v { "1".into() } else { "0".into() });
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioreactorLoopConfig {
    pub setpoint: f64,
    pub kc: f64,
    pub ki: f64,
    pub s_i: DisturbanceKind,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub d_limits: (f64, f64),
    pub x0: f64,
    pub washout_threshold: f64,
    pub washout_duration: f64,
    pub params: BioreactorParams,
}

impl Default for BioreactorLoopConfig {
    fn default() -> Self {
        Self {
            setpoint: 8.5,
            kc: 0.1,
            ki: 0.05,
            s_i: DisturbanceKind::GaussianHold { mean: 20.0, std: 2.0, hold: 1.0 },
            horizon: 200.0,
            dt: 0.05,
            seed: 0,
            d_limits: (0.0, 0.5),
            x0: 3.0,
            washout_threshold: 0.1,
            washout_duration: 5.0,
            params: BioreactorParams::default(),
        }
    }
}

/// Biomass regulated by manipulating the dilution rate.
///
/// The run starts from the steady state whose biomass is `x0`, with the
/// controller bias at that state's dilution rate.
pub fn simulate_bioreactor_loop(cfg: &BioreactorLoopConfig) -> Result<SimulationResult> {
    let p = cfg.params;
    let s_mean = cfg.s_i.mean();
    if plants::dilution_for_biomass(cfg.setpoint, s_mean, &p).is_none() {
        return Err(Error::InvalidParameter {
            name: "setpoint",
            reason: format!("{} not reachable with feed substrate {s_mean}", cfg.setpoint),
        });
    }
    let bias = plants::dilution_for_biomass(cfg.x0, s_mean, &p).ok_or_else(|| Error::InvalidParameter {
        name: "x0",
        reason: format!("{} not a steady state with feed substrate {s_mean}", cfg.x0),
    })?;
    let s_i = DisturbanceSignal::new(cfg.s_i.clone(), mix_seed(cfg.seed, 1)).realize(cfg.horizon)?;
    let mut pi = PiController::new(cfg.kc, cfg.ki, cfg.setpoint, bias, cfg.d_limits, -1.0)?;
    let mut st = BioreactorState { x: cfg.x0, s: plants::bioreactor_steady_state(bias, s_mean, &p).s };
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut res = SimulationResult {
        columns: ["time", "x", "s", "D", "s_i"].map(String::from).to_vec(),
        rows: Vec::with_capacity(steps + 1),
        objective: Vec::with_capacity(steps + 1),
        violation: Vec::with_capacity(steps + 1),
        controlled: vec![ControlledVariable { name: "x".into(), column: 1, setpoint: cfg.setpoint }],
        washout: false,
        abort: None,
        planned_samples: steps + 1,
    };
    let mut low_since: Option<f64> = None;
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let si = s_i.sample(t);
        let d = pi.update(st.x, cfg.dt);
        res.rows.push(vec![t, st.x, st.s, d, si]);
        res.objective.push(plants::productivity(d, st.x));
        res.violation.push(false);
        if st.x < cfg.washout_threshold {
            let since = *low_since.get_or_insert(t);
            if t - since >= cfg.washout_duration {
                res.washout = true;
            }
        } else {
            low_since = None;
        }
        if k == steps {
            break;
        }
        let mut rhs = |_: f64, y: &[f64]| -> Result<Vec<f64>> {
            let (dx, ds) = plants::bioreactor_rhs(BioreactorState { x: y[0], s: y[1] }, d, si, &p);
            Ok(vec![dx, ds])
        };
        let next = plants::rk4_step(&mut rhs, t, &[st.x, st.s], cfg.dt)?;
        if next.iter().any(|v| !v.is_finite()) {
            res.abort = Some(format!("non-finite state at t = {}", t + cfg.dt));
            break;
        }
        st = BioreactorState { x: next[0].max(0.0), s: next[1].max(0.0) };
    }
    Ok(res)
}

/// Gains of the three evaporator loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorGains {
    pub kc_pd: f64,
    pub ki_pd: f64,
    pub kc_hb: f64,
    pub ki_hb: f64,
    pub kc_xbts: f64,
    pub ki_xbts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorLoopConfig {
    pub setpoint: EvaporatorSetpoint,
    pub gains: EvaporatorGains,
    pub x_f: DisturbanceKind,
    pub f: DisturbanceKind,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub profile: ConstraintProfile,
    pub steam_limits: (f64, f64),
    pub bottoms_limits: (f64, f64),
    pub vapour_limits: (f64, f64),
    /// Hold `T_S` at its steady value instead of closing the `x_B` loop.
    pub manual_steam: bool,
    pub costs: CostParams,
    pub params: EvaporatorParams,
}

impl EvaporatorLoopConfig {
    pub fn new(setpoint: EvaporatorSetpoint, gains: EvaporatorGains, profile: ConstraintProfile) -> Self {
        Self {
            setpoint,
            gains,
            x_f: DisturbanceKind::GaussianHold { mean: 0.2, std: 0.08, hold: 10.0 },
            f: DisturbanceKind::StepSequence { n_steps: 5, mean: 100.0, std: 80.0, horizon: 10_000.0 },
            horizon: 10_000.0,
            dt: 0.2,
            seed: 0,
            profile,
            steam_limits: default_steam_limits(profile),
            bottoms_limits: (0.0, 500.0),
            vapour_limits: (0.0, 500.0),
            manual_steam: false,
            costs: CostParams::default(),
            params: EvaporatorParams::default(),
        }
    }
}

/// Steam temperature actuator range for a constraint profile.
pub fn default_steam_limits(profile: ConstraintProfile) -> (f64, f64) {
    match profile {
        ConstraintProfile::Reported => (300.0, STEAM_MAX),
        ConstraintProfile::Stated => (400.0, STEAM_MAX),
    }
}

/// Whether a closed-loop sample breaks an operating bound.
pub fn evaporator_violation(x_b: f64, h: f64, p: f64, t_s: f64, profile: ConstraintProfile) -> bool {
    x_b > PRODUCT_MAX
        || h < LEVEL_BOUNDS.0
        || h > LEVEL_BOUNDS.1
        || p < CLOSED_LOOP_PRESSURE_MIN
        || p > PRESSURE_MAX
        || t_s > STEAM_MAX
        || profile.steam_min().is_some_and(|lo| t_s < lo)
}

/// Three PI loops: `x_B→T_S`, `h→B`, `P→D`.
pub fn simulate_evaporator_loop(cfg: &EvaporatorLoopConfig) -> Result<SimulationResult> {
    let p = cfg.params;
    let sp = cfg.setpoint;
    let op = plants::evaporator_steady_state(&sp, cfg.f.mean(), cfg.x_f.mean(), &p)?;
    let x_f = DisturbanceSignal::new(cfg.x_f.clone(), mix_seed(cfg.seed, 2)).realize(cfg.horizon)?;
    let f = DisturbanceSignal::new(cfg.f.clone(), mix_seed(cfg.seed, 3)).realize(cfg.horizon)?;
    let g = cfg.gains;
    let mut steam = PiController::new(g.kc_xbts, g.ki_xbts, sp.x_b, op.t_s, cfg.steam_limits, 1.0)?;
    let mut bottoms = PiController::new(g.kc_hb, g.ki_hb, sp.h, op.b, cfg.bottoms_limits, -1.0)?;
    let mut vapour = PiController::new(g.kc_pd, g.ki_pd, sp.p, op.d, cfg.vapour_limits, -1.0)?;
    let mut st = EvaporatorState { h: sp.h, x_b: sp.x_b, rho: p.vapour_density(sp.p) };
    let h_max = p.tank_height();
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut res = SimulationResult {
        columns: ["time", "h", "x_B", "rho", "P", "T", "T_S", "B", "D", "F", "x_F"].map(String::from).to_vec(),
        rows: Vec::with_capacity(steps + 1),
        objective: Vec::with_capacity(steps + 1),
        violation: Vec::with_capacity(steps + 1),
        controlled: vec![
            ControlledVariable { name: "P".into(), column: 4, setpoint: sp.p },
            ControlledVariable { name: "h".into(), column: 1, setpoint: sp.h },
            ControlledVariable { name: "x_B".into(), column: 2, setpoint: sp.x_b },
        ],
        washout: false,
        abort: None,
        planned_samples: steps + 1,
    };
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let alg = match plants::evaporator_algebraic(&st, &p) {
            Ok(a) => a,
            Err(e) => {
                res.abort = Some(format!("t = {t}: {e}"));
                break;
            }
        };
        let dist = EvaporatorDisturbances { f: f.sample(t), x_f: x_f.sample(t) };
        let t_s = if cfg.manual_steam { op.t_s } else { steam.update(st.x_b, cfg.dt) };
        let u = EvaporatorInputs { t_s, b: bottoms.update(st.h, cfg.dt), d: vapour.update(alg.p, cfg.dt) };
        res.rows.push(vec![t, st.h, st.x_b, st.rho, alg.p, alg.t, u.t_s, u.b, u.d, dist.f, dist.x_f]);
        let now = OperatingPoint { b: u.b, d: u.d, t_s: u.t_s, t: alg.t };
        res.objective.push(plants::profit(st.x_b, st.h, dist.f, &now, &cfg.costs));
        res.violation.push(evaporator_violation(st.x_b, st.h, alg.p, u.t_s, cfg.profile));
        if k == steps {
            break;
        }
        let mut rhs = |_: f64, y: &[f64]| -> Result<Vec<f64>> {
            let s = EvaporatorState { h: y[0], x_b: y[1], rho: y[2] };
            Ok(plants::evaporator_rhs(&s, &u, &dist, &p)?.to_vec())
        };
        match plants::rk4_step(&mut rhs, t, &[st.h, st.x_b, st.rho], cfg.dt) {
            Ok(n) if n.iter().all(|v| v.is_finite()) => {
                st = EvaporatorState {
                    h: n[0].clamp(1e-6, h_max - 1e-6),
                    x_b: n[1].clamp(0.0, 1.0),
                    rho: n[2].max(1e-9),
                };
            }
            Ok(_) => {
                res.abort = Some(format!("non-finite state at t = {}", t + cfg.dt));
                break;
            }
            Err(e) => {
                res.abort = Some(format!("t = {t}: {e}"));
                break;
            }
        }
    }
    Ok(res)
}

/// Largest deviation of each controlled variable from its set-point after
/// the first `settle_fraction` of the horizon.
pub fn estimate_gamma(result: &SimulationResult, settle_fraction: f64) -> Vec<f64> {
    let cutoff = settle_fraction * result.horizon();
    result
        .controlled
        .iter()
        .map(|cv| {
            result
                .rows
                .iter()
                .filter(|r| r[0] >= cutoff)
                .map(|r| (r[cv.column] - cv.setpoint).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_objective: f64,
    pub std_objective: f64,
    pub violation_fraction: f64,
    pub itae: Vec<(String, f64)>,
    pub washout: bool,
    pub aborted: bool,
}

/// Summary statistics; the objective counts as zero on violating samples.
/// Samples lost to an early abort count as violating.
pub fn metrics(result: &SimulationResult) -> Result<Metrics> {
    let n = result.objective.len().max(result.planned_samples);
    if result.objective.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut vals: Vec<f64> =
        result.objective.iter().zip(&result.violation).map(|(o, v)| if *v { 0.0 } else { *o }).collect();
    vals.resize(n, 0.0);
    let mean = vals.iter().sum::<f64>() / n as f64;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let lost = n - result.violation.len();
    let frac = (result.violation.iter().filter(|v| **v).count() + lost) as f64 / n as f64;
    let dt = if result.rows.len() > 1 { result.rows[1][0] - result.rows[0][0] } else { 0.0 };
    let itae = result
        .controlled
        .iter()
        .map(|cv| {
            let s: f64 = result.rows.iter().map(|r| r[0] * (r[cv.column] - cv.setpoint).abs() * dt).sum();
            (cv.name.clone(), s)
        })
        .collect();
    Ok(Metrics {
        mean_objective: mean,
        std_objective: std,
        violation_fraction: frac,
        itae,
        washout: result.washout,
        aborted: result.abort.is_some(),
    })
}

/// Runs the bioreactor loop once per seed, in parallel.
pub fn bioreactor_batch(cfg: &BioreactorLoopConfig, seeds: &[u64]) -> Result<Vec<SimulationResult>> {
    seeds
        .par_iter()
        .map(|&seed| simulate_bioreactor_loop(&BioreactorLoopConfig { seed, ..cfg.clone() }))
        .collect()
}

/// Runs the evaporator loop once per seed, in parallel.
pub fn evaporator_batch(cfg: &EvaporatorLoopConfig, seeds: &[u64]) -> Result<Vec<SimulationResult>> {
    seeds
        .par_iter()
        .map(|&seed| simulate_evaporator_loop(&EvaporatorLoopConfig { seed, ..cfg.clone() }))
        .collect()
}

/// Mean and standard deviation of `f` under uniform perturbations drawn
/// from the uncertainty set around `center`.
pub fn perturbation_study(
    f: &dyn Fn(&[f64]) -> f64,
    center: &[f64],
    set: &UncertaintySet,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::EmptyInput);
    }
    let n = set.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..samples)
        .map(|_| {
            let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let r = rng.random::<f64>().powf(1.0 / n as f64);
            let w: Vec<f64> = g.iter().map(|v| v / gn * r).collect();
            f(&set.offset_point(center, &w).expect("dimension checked"))
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / samples as f64;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples as f64).sqrt();
    Ok((mean, std))
}
