//! Built-in benchmark problems.

use crate::control::EvaporatorGains;
use crate::error::Result;
use crate::plants::{self, BioreactorParams, CostParams, EvaporatorParams, EvaporatorSetpoint, OperatingPoint};
use crate::solver::{ProblemSpec, Sense};
use crate::surrogate::GpModel;
use crate::uncertainty::UncertaintySet;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkId {
    Illustrative,
    IllustrativeEllipsoid,
    Bioreactor,
    Evaporator,
}

impl std::str::FromStr for BenchmarkId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "illustrative" => Ok(Self::Illustrative),
            "illustrative-ellipsoid" => Ok(Self::IllustrativeEllipsoid),
            "bioreactor" => Ok(Self::Bioreactor),
            "evaporator" => Ok(Self::Evaporator),
            other => Err(format!("unknown benchmark `{other}`")),
        }
    }
}

impl std::fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Illustrative => "illustrative",
            Self::IllustrativeEllipsoid => "illustrative-ellipsoid",
            Self::Bioreactor => "bioreactor",
            Self::Evaporator => "evaporator",
        })
    }
}

pub fn illustrative_objective(x: f64, y: f64) -> f64 {
    -2.0 * x.powi(6) + 12.2 * x.powi(5) - 21.2 * x.powi(4) + 6.4 * x.powi(3) + 4.7 * x.powi(2) - 12.74533 * x
        - y.powi(6) + 11.0 * y.powi(5) - 43.3 * y.powi(4) + 74.8 * y.powi(3) - 56.9 * y.powi(2) + 11.43686 * y
        + 4.1 * x * y + 0.1 * x * x * y * y - 0.4 * x * y * y - 0.4 * x * x * y
        + 12.66273
}

pub fn illustrative_gradient(x: f64, y: f64) -> [f64; 2] {
    [
        -12.0 * x.powi(5) + 61.0 * x.powi(4) - 84.8 * x.powi(3) + 19.2 * x * x + 9.4 * x - 12.74533
            + 4.1 * y + 0.2 * x * y * y - 0.4 * y * y - 0.8 * x * y,
        -6.0 * y.powi(5) + 55.0 * y.powi(4) - 173.2 * y.powi(3) + 224.4 * y * y - 113.8 * y + 11.43686
            + 4.1 * x + 0.2 * x * x * y - 0.8 * x * y - 0.4 * x * x,
    ]
}

pub const ILLUSTRATIVE_LOWER: [f64; 2] = [-1.0, -0.5];
pub const ILLUSTRATIVE_UPPER: [f64; 2] = [3.5, 4.5];

/// Maximize the two-variable polynomial over its box.
pub fn illustrative_problem(uncertainty: UncertaintySet) -> ProblemSpec {
    ProblemSpec {
        name: "illustrative".into(),
        objective: Arc::new(|v: &[f64]| illustrative_objective(v[0], v[1])),
        gradient: Some(Arc::new(|v: &[f64]| illustrative_gradient(v[0], v[1]).to_vec())),
        sense: Sense::Maximize,
        constraints: vec![],
        lower: ILLUSTRATIVE_LOWER.to_vec(),
        upper: ILLUSTRATIVE_UPPER.to_vec(),
        uncertainty,
    }
}

/// Steady-state `(x, Q)` samples at `D = 0.025, 0.05, …, 0.5`.
pub fn bioreactor_training_data(s_i: f64, p: &BioreactorParams) -> (Vec<f64>, Vec<f64>) {
    (1..=20)
        .map(|k| {
            let d = 0.025 * k as f64;
            let ss = plants::bioreactor_steady_state(d, s_i, p);
            (ss.x, plants::productivity(d, ss.x))
        })
        .unzip()
}

pub const BIOREACTOR_LOWER: f64 = 0.5;
pub const BIOREACTOR_UPPER: f64 = 10.0;

/// Maximize the surrogate productivity over biomass concentration.
pub fn bioreactor_problem(gp: Arc<GpModel>, gamma: f64) -> Result<ProblemSpec> {
    Ok(ProblemSpec {
        name: "bioreactor".into(),
        objective: Arc::new(move |v: &[f64]| gp.predict_mean(v[0])),
        gradient: None,
        sense: Sense::Maximize,
        constraints: vec![],
        lower: vec![BIOREACTOR_LOWER],
        upper: vec![BIOREACTOR_UPPER],
        uncertainty: UncertaintySet::sphere(1, gamma)?,
    })
}

/// Which evaporator bounds the steady-state problem and the closed loop use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintProfile {
    /// `P ≥ 0.1 MPa` for set-points, `T_S ≤ 450 K` only.
    #[default]
    Reported,
    /// `P ≥ 0.05 MPa` and `400 ≤ T_S ≤ 450 K`.
    Stated,
}

impl ConstraintProfile {
    pub fn setpoint_pressure_min(&self) -> f64 {
        match self {
            Self::Reported => 1.0e5,
            Self::Stated => 0.5e5,
        }
    }

    pub fn steam_min(&self) -> Option<f64> {
        match self {
            Self::Reported => None,
            Self::Stated => Some(400.0),
        }
    }
}

pub const STEAM_MAX: f64 = 450.0;
pub const LEVEL_BOUNDS: (f64, f64) = (2.0, 8.0);
pub const PRESSURE_MAX: f64 = 5.0e5;
pub const CLOSED_LOOP_PRESSURE_MIN: f64 = 0.5e5;
pub const PRODUCT_MAX: f64 = 0.9;
pub const PRODUCT_MIN: f64 = 0.25;

/// Operating point without the concentration check, for use inside search.
fn operating_point(sp: &EvaporatorSetpoint, f: f64, x_f: f64, p: &EvaporatorParams) -> OperatingPoint {
    let b = f * x_f / sp.x_b;
    let d = f - b;
    let t = p.antoine_temperature(sp.p);
    OperatingPoint { b, d, t_s: t + d * p.dh_v / (p.u * p.a_s), t }
}

/// Steady-state profit at a set-point `[x_B, h, P]` under mean disturbances.
pub fn evaporator_profit(v: &[f64], f: f64, x_f: f64, p: &EvaporatorParams, c: &CostParams) -> f64 {
    let sp = EvaporatorSetpoint { x_b: v[0], h: v[1], p: v[2] };
    plants::profit(sp.x_b, sp.h, f, &operating_point(&sp, f, x_f, p), c)
}

/// Maximize steady-state profit over `[x_B, h, P (Pa)]`.
///
/// `radii` are in the same order as the decision vector.
pub fn evaporator_problem(
    f_mean: f64,
    x_f_mean: f64,
    radii: [f64; 3],
    profile: ConstraintProfile,
    costs: CostParams,
) -> Result<ProblemSpec> {
    let p = EvaporatorParams::default();
    let steam = move |v: &[f64]| operating_point(&EvaporatorSetpoint { x_b: v[0], h: v[1], p: v[2] }, f_mean, x_f_mean, &p).t_s;
    let mut constraints: Vec<crate::ScalarFn> = vec![Arc::new(move |v: &[f64]| steam(v) - STEAM_MAX)];
    if let Some(lo) = profile.steam_min() {
        constraints.push(Arc::new(move |v: &[f64]| lo - steam(v)));
    }
    Ok(ProblemSpec {
        name: "evaporator".into(),
        objective: Arc::new(move |v: &[f64]| evaporator_profit(v, f_mean, x_f_mean, &p, &costs)),
        gradient: None,
        sense: Sense::Maximize,
        constraints,
        lower: vec![PRODUCT_MIN, LEVEL_BOUNDS.0, profile.setpoint_pressure_min()],
        upper: vec![PRODUCT_MAX, LEVEL_BOUNDS.1, PRESSURE_MAX],
        uncertainty: UncertaintySet::new(radii.to_vec())?,
    })
}

/// A tuned multi-loop controller design and the figures reported for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSetting {
    pub id: usize,
    pub budget: usize,
    pub gains: EvaporatorGains,
    pub itae: f64,
    pub gamma_p: f64,
    pub gamma_h: f64,
    pub gamma_xb: f64,
    pub robust_setpoint: EvaporatorSetpoint,
    pub robust_profit: f64,
}

impl ControllerSetting {
    /// Radii in decision-vector order `[x_B, h, P]`.
    pub fn radii(&self) -> [f64; 3] {
        [self.gamma_xb, self.gamma_h, self.gamma_p]
    }
}

const fn setting(
    id: usize,
    budget: usize,
    g: [f64; 6],
    itae: f64,
    gamma: [f64; 3],
    sp: [f64; 3],
    robust_profit: f64,
) -> ControllerSetting {
    ControllerSetting {
        id,
        budget,
        gains: EvaporatorGains {
            kc_pd: g[0],
            ki_pd: g[1],
            kc_hb: g[2] * 1e3,
            ki_hb: g[3],
            kc_xbts: g[4] * 1e3,
            ki_xbts: g[5],
        },
        itae,
        gamma_p: gamma[0],
        gamma_h: gamma[1],
        gamma_xb: gamma[2],
        robust_setpoint: EvaporatorSetpoint { x_b: sp[0], h: sp[1], p: sp[2] * 1e6 },
        robust_profit,
    }
}

/// The seven tuned controller settings for the evaporator.
pub const CONTROLLER_SETTINGS: [ControllerSetting; 7] = [
    setting(1, 10, [0.10, 0.20, 0.10, 2.50, 0.10, 0.50], 3142.17, [441.0, 0.23, 0.13], [0.77, 2.23, 0.100441], 58.08),
    setting(2, 25, [0.05, 0.40, 0.50, 1.25, 0.05, 0.25], 2700.24, [394.0, 0.25, 0.16], [0.74, 2.25, 0.100394], 51.08),
    setting(3, 50, [0.10, 0.20, 0.10, 2.50, 1.00, 0.50], 2488.29, [457.0, 0.17, 0.08], [0.82, 2.17, 0.100457], 69.85),
    setting(4, 100, [0.20, 0.10, 0.05, 1.25, 0.50, 1.00], 2350.84, [339.0, 0.20, 0.05], [0.85, 2.20, 0.100339], 76.73),
    setting(5, 500, [0.19, 0.11, 0.07, 1.10, 1.37, 0.00], 2032.22, [322.0, 0.11, 0.06], [0.84, 2.11, 0.100322], 74.70),
    setting(6, 750, [0.10, 0.10, 2.50, 5.07, 1.00, 0.50], 1817.36, [309.0, 0.02, 0.04], [0.86, 2.02, 0.100309], 79.63),
    setting(7, 1000, [0.19, 0.17, 1.25, 6.37, 1.28, 0.47], 1783.32, [259.0, 0.03, 0.04], [0.86, 2.03, 0.100259], 79.61),
];

/// Nominal economic optimum of the evaporator.
pub const EVAPORATOR_NOMINAL: EvaporatorSetpoint = EvaporatorSetpoint { x_b: 0.9, h: 2.0, p: 1.0e5 };

/// Set-point used when tuning the controllers.
pub const EVAPORATOR_TUNING_POINT: EvaporatorSetpoint = EvaporatorSetpoint { x_b: 0.7, h: 5.0, p: 1.0e5 };
