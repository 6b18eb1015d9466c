use approx::assert_relative_eq;
use arrtoc::plants::*;
use arrtoc::problems::{evaporator_profit, EVAPORATOR_NOMINAL};
use proptest::prelude::*;

fn setpoint() -> impl Strategy<Value = EvaporatorSetpoint> {
    (0.25f64..0.9, 2.0f64..8.0, 0.5e5f64..5.0e5).prop_map(|(x_b, h, p)| EvaporatorSetpoint { x_b, h, p })
}

proptest! {
    #[test]
    fn monod_strictly_increasing(a in 0.0f64..50.0, gap in 1e-6f64..10.0) {
        let p = BioreactorParams::default();
        prop_assert!(monod_mu(a + gap, &p) > monod_mu(a, &p));
    }

    #[test]
    fn steady_state_mole_balance(sp in setpoint(), f in 20.0f64..200.0, x_f in 0.05f64..0.25) {
        let p = EvaporatorParams::default();
        let op = evaporator_steady_state(&sp, f, x_f, &p).unwrap();
        prop_assert!((f - op.b - op.d).abs() <= 1e-9 * f);
        prop_assert!((f * x_f - op.b * sp.x_b).abs() <= 1e-9 * f);
    }

    #[test]
    fn steady_state_zeroes_the_dynamics(sp in setpoint(), f in 20.0f64..200.0, x_f in 0.05f64..0.25) {
        let p = EvaporatorParams::default();
        let op = evaporator_steady_state(&sp, f, x_f, &p).unwrap();
        let state = EvaporatorState { h: sp.h, x_b: sp.x_b, rho: p.vapour_density(sp.p) };
        let r = evaporator_rhs(&state, &EvaporatorInputs { t_s: op.t_s, b: op.b, d: op.d },
                               &EvaporatorDisturbances { f, x_f }, &p).unwrap();
        prop_assert!(r[0].abs() < 1e-6 && r[1].abs() < 1e-6);
        prop_assert!(r[2].abs() < 1e-6 * state.rho.max(1.0), "{:?}", r);
    }

    #[test]
    fn pressure_root_inverts_density(pp in 1.0e4f64..1.0e6) {
        let p = EvaporatorParams::default();
        let alg = evaporator_algebraic(&EvaporatorState { h: 4.0, x_b: 0.5, rho: p.vapour_density(pp) }, &p).unwrap();
        prop_assert!((alg.p - pp).abs() < 1e-6 * pp);
    }
}

#[test]
fn washed_out_culture_stays_washed_out() {
    let p = BioreactorParams::default();
    let rhs = |_t: f64, y: &[f64]| -> arrtoc::Result<Vec<f64>> {
        let (dx, ds) = bioreactor_rhs(BioreactorState { x: y[0], s: y[1] }, 0.3, 20.0, &p);
        Ok(vec![dx, ds])
    };
    let ts = rk4_integrate(rhs, &[0.0, 5.0], 100.0, 0.05, |_| {}).unwrap();
    assert!(ts.states.iter().all(|s| s[0] == 0.0));
}

#[test]
fn bioreactor_converges_to_its_steady_state() {
    let p = BioreactorParams::default();
    let rhs = |_t: f64, y: &[f64]| -> arrtoc::Result<Vec<f64>> {
        let (dx, ds) = bioreactor_rhs(BioreactorState { x: y[0], s: y[1] }, 0.25, 20.0, &p);
        Ok(vec![dx, ds])
    };
    let ts = rk4_integrate(rhs, &[3.0, 5.0], 300.0, 0.05, |_| {}).unwrap();
    let ss = bioreactor_steady_state(0.25, 20.0, &p);
    let last = ts.states.last().unwrap();
    assert_relative_eq!(last[0], ss.x, epsilon = 1e-6);
    assert_relative_eq!(last[1], ss.s, epsilon = 1e-6);
    assert_relative_eq!(ss.x, 9.9, epsilon = 1e-12);
}

#[test]
fn nominal_profit_and_energy_basis() {
    let p = EvaporatorParams::default();
    let v = [EVAPORATOR_NOMINAL.x_b, EVAPORATOR_NOMINAL.h, EVAPORATOR_NOMINAL.p];
    let steam = evaporator_profit(&v, 100.0, 0.2, &p, &CostParams::default());
    assert!((steam - 89.03).abs() < 0.01, "{steam}");
    let literal = CostParams { energy_basis: EnergyBasis::EvaporatorTemperature, ..CostParams::default() };
    assert!(evaporator_profit(&v, 100.0, 0.2, &p, &literal) > steam);
}

#[test]
fn rk4_is_exact_for_cubic_time() {
    let rhs = |t: f64, _y: &[f64]| -> arrtoc::Result<Vec<f64>> { Ok(vec![3.0 * t * t]) };
    let ts = rk4_integrate(rhs, &[0.0], 2.0, 0.5, |_| {}).unwrap();
    assert_relative_eq!(ts.states.last().unwrap()[0], 8.0, epsilon = 1e-12);
}
