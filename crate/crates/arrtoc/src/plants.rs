//! Process models: a Monod chemostat and a single-stage evaporator.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BioreactorParams {
    /// 1/hr
    pub mu_max: f64,
    /// kg/kg
    pub y_xs: f64,
    /// kg/m³
    pub k_s: f64,
}

impl Default for BioreactorParams {
    fn default() -> Self {
        Self { mu_max: 0.5, y_xs: 0.5, k_s: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BioreactorState {
    pub x: f64,
    pub s: f64,
}

pub fn monod_mu(s: f64, p: &BioreactorParams) -> f64 {
    let s = s.max(0.0);
    p.mu_max * s / (p.k_s + s)
}

/// `(dx/dt, ds/dt)` at dilution rate `d` and feed substrate `s_i`.
pub fn bioreactor_rhs(state: BioreactorState, d: f64, s_i: f64, p: &BioreactorParams) -> (f64, f64) {
    let mu = monod_mu(state.s, p);
    ((mu - d) * state.x, d * (s_i - state.s) - mu * state.x / p.y_xs)
}

/// Dilution rate above which the culture washes out.
pub fn critical_dilution(s_i: f64, p: &BioreactorParams) -> f64 {
    p.mu_max * s_i / (p.k_s + s_i)
}

/// Non-trivial steady state, or `(0, s_i)` past the critical dilution rate.
pub fn bioreactor_steady_state(d: f64, s_i: f64, p: &BioreactorParams) -> BioreactorState {
    if d >= critical_dilution(s_i, p) {
        return BioreactorState { x: 0.0, s: s_i };
    }
    let s = p.k_s * d / (p.mu_max - d);
    BioreactorState { x: p.y_xs * (s_i - s), s }
}

/// Dilution rate whose steady state has biomass `x` (`None` if unreachable).
pub fn dilution_for_biomass(x: f64, s_i: f64, p: &BioreactorParams) -> Option<f64> {
    let s = s_i - x / p.y_xs;
    (s > 0.0 && x > 0.0).then(|| monod_mu(s, p))
}

/// Volumetric biomass productivity `D·x`.
pub fn productivity(d: f64, x: f64) -> f64 {
    d * x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorParams {
    pub a_t: f64,
    pub c: f64,
    pub m_w: f64,
    pub r: f64,
    pub u: f64,
    pub a_s: f64,
    pub dh_v: f64,
    pub v_t: f64,
    pub antoine_a: f64,
    pub antoine_b: f64,
    pub antoine_c: f64,
}

impl Default for EvaporatorParams {
    fn default() -> Self {
        Self {
            a_t: 100.0,
            c: 10.0,
            m_w: 0.078,
            r: 8.3145,
            u: 1000.0,
            a_s: 50.0,
            dh_v: 30800.0,
            v_t: 1000.0,
            antoine_a: 6.87987,
            antoine_b: 1196.76,
            antoine_c: 219.161,
        }
    }
}

const MMHG_PER_PA: f64 = 1.0 / 133.322;

impl EvaporatorParams {
    /// Saturation temperature (K) at pressure `p` (Pa).
    pub fn antoine_temperature(&self, p: f64) -> f64 {
        self.antoine_b / (self.antoine_a - (p * MMHG_PER_PA).log10()) - self.antoine_c + 273.15
    }

    /// Saturation pressure (Pa) at temperature `t` (K).
    pub fn antoine_pressure(&self, t: f64) -> f64 {
        10f64.powf(self.antoine_a - self.antoine_b / (t - 273.15 + self.antoine_c)) / MMHG_PER_PA
    }

    pub fn tank_height(&self) -> f64 {
        self.v_t / self.a_t
    }

    /// Saturated vapour density (kg/m³) at pressure `p`.
    pub fn vapour_density(&self, p: f64) -> f64 {
        p * self.m_w / (self.r * self.antoine_temperature(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorState {
    pub h: f64,
    pub x_b: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorAlgebraic {
    pub p: f64,
    pub t: f64,
    pub v_vap: f64,
}

/// Pressure, temperature and vapour volume consistent with the state.
///
/// Solves `P = ρRT(P)/M_W` with `T(P)` from Antoine's equation by a
/// bracketed Newton iteration on `[1e2, 1e7]` Pa.
pub fn evaporator_algebraic(state: &EvaporatorState, p: &EvaporatorParams) -> Result<EvaporatorAlgebraic> {
    let v_vap = p.v_t - p.a_t * state.h;
    let rho = state.rho;
    let g = |pp: f64| pp - rho * p.r * p.antoine_temperature(pp) / p.m_w;
    let (mut lo, mut hi) = (1e2, 1e7);
    if !(rho > 0.0) || g(lo) > 0.0 || g(hi) < 0.0 {
        return Err(Error::NoPressureRoot { rho });
    }
    let mut x = (rho * p.r * 350.0 / p.m_w).clamp(lo, hi);
    for _ in 0..200 {
        let gx = g(x);
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let den = p.antoine_a - (x * MMHG_PER_PA).log10();
        let dt_dp = p.antoine_b / (den * den) / (x * std::f64::consts::LN_10);
        let dg = 1.0 - rho * p.r * dt_dp / p.m_w;
        let mut next = x - gx / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() < 1e-8;
        x = next;
        if done {
            break;
        }
    }
    Ok(EvaporatorAlgebraic { p: x, t: p.antoine_temperature(x), v_vap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorInputs {
    pub t_s: f64,
    pub b: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorDisturbances {
    pub f: f64,
    pub x_f: f64,
}

/// `(dh/dt, dx_B/dt, dρ/dt)` with the algebraic variables substituted.
pub fn evaporator_rhs(
    state: &EvaporatorState,
    u: &EvaporatorInputs,
    d: &EvaporatorDisturbances,
    p: &EvaporatorParams,
) -> Result<[f64; 3]> {
    if !(state.h > 0.0 && state.h < p.tank_height()) {
        return Err(Error::TankLevel { h: state.h });
    }
    let alg = evaporator_algebraic(state, p)?;
    let e = p.u * p.a_s * (u.t_s - alg.t) / p.dh_v;
    let dh = (d.f - u.b - u.d) / (p.a_t * p.c);
    let dxb = (d.f * d.x_f - u.b * state.x_b) / (p.a_t * state.h * p.c) - state.x_b / state.h * dh;
    let dv = -p.a_t * dh;
    let drho = p.m_w / alg.v_vap * (e - u.d) - state.rho / alg.v_vap * dv;
    Ok([dh, dxb, drho])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporatorSetpoint {
    pub x_b: f64,
    pub h: f64,
    /// Pa
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub b: f64,
    pub d: f64,
    pub t_s: f64,
    pub t: f64,
}

pub fn evaporator_steady_state(
    sp: &EvaporatorSetpoint,
    f: f64,
    x_f: f64,
    p: &EvaporatorParams,
) -> Result<OperatingPoint> {
    if !(sp.x_b >= x_f && x_f > 0.0 && sp.x_b <= 1.0) {
        return Err(Error::NoConcentration { x_b: sp.x_b, x_f });
    }
    let b = f * x_f / sp.x_b;
    let d = f - b;
    let t = p.antoine_temperature(sp.p);
    Ok(OperatingPoint { b, d, t_s: t + d * p.dh_v / (p.u * p.a_s), t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyBasis {
    /// Energy cost charged on the steam temperature.
    #[default]
    SteamTemperature,
    /// Energy cost charged on the evaporator temperature.
    EvaporatorTemperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub price_slope: f64,
    pub price_offset: f64,
    pub feed_cost: f64,
    pub energy_cost: f64,
    pub tank_cost: f64,
    pub energy_basis: EnergyBasis,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            price_slope: 11.875,
            price_offset: -1.875,
            feed_cost: 0.04,
            energy_cost: 0.01,
            tank_cost: 0.75,
            energy_basis: EnergyBasis::SteamTemperature,
        }
    }
}

/// Instantaneous profit in $/s.
pub fn profit(x_b: f64, h: f64, f: f64, op: &OperatingPoint, c: &CostParams) -> f64 {
    let temp = match c.energy_basis {
        EnergyBasis::SteamTemperature => op.t_s,
        EnergyBasis::EvaporatorTemperature => op.t,
    };
    (c.price_slope * x_b + c.price_offset) * op.b * x_b
        - c.feed_cost * f
        - c.energy_cost * temp.max(0.0).powf(1.5)
        - c.tank_cost * h * h
}

/// Classic fourth-order Runge-Kutta step.
pub fn rk4_step<F>(rhs: &mut F, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let shift = |k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + 0.5 * dt, &shift(&k1, 0.5 * dt))?;
    let k3 = rhs(t + 0.5 * dt, &shift(&k2, 0.5 * dt))?;
    let k4 = rhs(t + dt, &shift(&k3, dt))?;
    Ok((0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub time: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Set when integration stopped early.
    pub abort: Option<Error>,
}

/// Fixed-step integration over `[0, horizon]`, applying `clamp` after each
/// step. Time-varying inputs enter through `rhs`'s time argument.
pub fn rk4_integrate<F, C>(mut rhs: F, state0: &[f64], horizon: f64, dt: f64, mut clamp: C) -> Result<TimeSeries>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    C: FnMut(&mut [f64]),
{
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", reason: format!("{dt} must be positive") });
    }
    let steps = (horizon / dt).round() as usize;
    let mut out = TimeSeries { time: vec![0.0], states: vec![state0.to_vec()], abort: None };
    let mut y = state0.to_vec();
    for k in 0..steps {
        let t = k as f64 * dt;
        let next = rk4_step(&mut rhs, t, &y, dt).and_then(|mut n| {
            clamp(&mut n);
            if n.iter().all(|v| v.is_finite()) {
                Ok(n)
            } else {
                Err(Error::SimulationAbort { t: t + dt, reason: "non-finite state".into() })
            }
        });
        match next {
            Ok(n) => {
                y = n;
                out.time.push((k + 1) as f64 * dt);
                out.states.push(y.clone());
            }
            Err(e) => {
                out.abort = Some(e);
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn monod_examples() {
        let p = BioreactorParams::default();
        assert_eq!(monod_mu(0.0, &p), 0.0);
        assert_relative_eq!(monod_mu(0.2, &p), 0.25);
        assert_relative_eq!(monod_mu(20.0, &p), 0.5 * 20.0 / 20.2);
    }

    #[test]
    fn bioreactor_balances() {
        let p = BioreactorParams::default();
        assert_eq!(bioreactor_rhs(BioreactorState { x: 0.0, s: 5.0 }, 0.3, 20.0, &p).0, 0.0);
        let ss = bioreactor_steady_state(0.3, 20.0, &p);
        let (dx, ds) = bioreactor_rhs(ss, 0.3, 20.0, &p);
        assert!(dx.abs() < 1e-9 && ds.abs() < 1e-9);
        let st = BioreactorState { x: 4.0, s: 20.0 };
        let (_, ds) = bioreactor_rhs(st, 0.0, 20.0, &p);
        assert_relative_eq!(ds, -monod_mu(20.0, &p) * 4.0 / 0.5);
    }

    #[test]
    fn bioreactor_steady_states() {
        let p = BioreactorParams::default();
        let ss = bioreactor_steady_state(0.45, 20.0, &p);
        assert!((ss.x - 9.09).abs() < 0.01);
        assert!((productivity(0.45, ss.x) - 4.09).abs() < 0.01);
        assert_eq!(bioreactor_steady_state(0.5, 20.0, &p), BioreactorState { x: 0.0, s: 20.0 });
        assert!((critical_dilution(20.0, &p) - 0.4950).abs() < 1e-4);
        let ss = bioreactor_steady_state(0.3, 20.0, &p);
        assert_relative_eq!(productivity(0.3, ss.x), 0.3 * 0.5 * (20.0 - 0.2 * 0.3 / 0.2), epsilon = 1e-12);
        assert_eq!(productivity(0.0, 7.0), 0.0);
        let d = dilution_for_biomass(8.5, 20.0, &p).unwrap();
        assert_relative_eq!(bioreactor_steady_state(d, 20.0, &p).x, 8.5, epsilon = 1e-9);
    }

    #[test]
    fn antoine_and_algebraic() {
        let p = EvaporatorParams::default();
        let t = p.antoine_temperature(1e5);
        assert!((t - 352.8).abs() < 0.05, "{t}");
        assert_relative_eq!(p.antoine_pressure(t), 1e5, max_relative = 1e-12);
        let rho = p.vapour_density(1e5);
        let alg = evaporator_algebraic(&EvaporatorState { h: 2.0, x_b: 0.9, rho }, &p).unwrap();
        assert!((alg.p - 1e5).abs() < 1e-6);
        assert_eq!(alg.v_vap, 800.0);
        let back = alg.p * p.m_w / (p.r * alg.t);
        assert_relative_eq!(back, rho, max_relative = 1e-8);
        assert!(evaporator_algebraic(&EvaporatorState { h: 2.0, x_b: 0.9, rho: -1.0 }, &p).is_err());
    }

    #[test]
    fn evaporator_steady_examples() {
        let p = EvaporatorParams::default();
        let sp = EvaporatorSetpoint { x_b: 0.9, h: 2.0, p: 1e5 };
        let op = evaporator_steady_state(&sp, 100.0, 0.2, &p).unwrap();
        assert!((op.b - 22.22).abs() < 0.01 && (op.d - 77.78).abs() < 0.01);
        assert!((op.t - 352.8).abs() < 0.05 && (op.t_s - 400.7).abs() < 0.05);
        let op1 = evaporator_steady_state(&EvaporatorSetpoint { x_b: 0.2, ..sp }, 100.0, 0.2, &p).unwrap();
        assert_relative_eq!(op1.b, 100.0);
        assert_eq!(op1.d, 0.0);
        assert_eq!(op1.t_s, op1.t);
        let op2 = evaporator_steady_state(&sp, 200.0, 0.2, &p).unwrap();
        assert_relative_eq!(op2.b, 2.0 * op.b);
        assert_relative_eq!(op2.t_s - op2.t, 2.0 * (op.t_s - op.t), max_relative = 1e-12);
        assert!(evaporator_steady_state(&EvaporatorSetpoint { x_b: 0.1, ..sp }, 100.0, 0.2, &p).is_err());
    }

    #[test]
    fn evaporator_rhs_balance() {
        let p = EvaporatorParams::default();
        let sp = EvaporatorSetpoint { x_b: 0.7, h: 5.0, p: 1e5 };
        let op = evaporator_steady_state(&sp, 100.0, 0.2, &p).unwrap();
        let st = EvaporatorState { h: sp.h, x_b: sp.x_b, rho: p.vapour_density(sp.p) };
        let dist = EvaporatorDisturbances { f: 100.0, x_f: 0.2 };
        let d = evaporator_rhs(&st, &EvaporatorInputs { t_s: op.t_s, b: op.b, d: op.d }, &dist, &p).unwrap();
        assert!(d[0].abs() < 1e-12 && d[1].abs() < 1e-12 && (d[2] / st.rho).abs() < 1e-9, "{d:?}");
        let d = evaporator_rhs(&st, &EvaporatorInputs { t_s: op.t_s, b: op.b + 5.0, d: op.d }, &dist, &p).unwrap();
        assert!(d[0] < 0.0);
        assert!(evaporator_rhs(&EvaporatorState { h: 0.0, ..st }, &EvaporatorInputs { t_s: op.t_s, b: op.b, d: op.d }, &dist, &p).is_err());
    }

    #[test]
    fn profit_examples() {
        let p = EvaporatorParams::default();
        let sp = EvaporatorSetpoint { x_b: 0.9, h: 2.0, p: 1e5 };
        let op = evaporator_steady_state(&sp, 100.0, 0.2, &p).unwrap();
        let c = CostParams::default();
        assert!((profit(0.9, 2.0, 100.0, &op, &c) - 89.03).abs() < 0.2);
        let lit = CostParams { energy_basis: EnergyBasis::EvaporatorTemperature, ..c };
        assert!((profit(0.9, 2.0, 100.0, &op, &lit) - 103.0).abs() < 0.5);
        let zero_b = OperatingPoint { b: 0.0, ..op };
        assert_relative_eq!(
            profit(0.9, 2.0, 100.0, &zero_b, &c),
            -4.0 - 0.01 * op.t_s.powf(1.5) - 3.0,
            epsilon = 1e-9
        );
        let x0 = 1.875 / 11.875;
        let rev = profit(x0, 0.0, 0.0, &op, &c) + 0.01 * op.t_s.powf(1.5);
        assert!(rev.abs() < 1e-9);
    }

    #[test]
    fn rk4_exponential_decay() {
        let ts = rk4_integrate(|_, y| Ok(vec![-y[0]]), &[1.0], 1.0, 0.001, |_| {}).unwrap();
        assert!((ts.states.last().unwrap()[0] - (-1f64).exp()).abs() < 1e-6);
        assert!(rk4_integrate(|_, y| Ok(vec![-y[0]]), &[1.0], 1.0, 0.0, |_| {}).is_err());
    }
}
