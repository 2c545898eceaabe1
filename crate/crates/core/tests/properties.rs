//! Property checks of the linear model, the switching rules and the
//! simulators on randomized inputs.

use gridswitch::deoc::{
    build_schedule, default_plans, switching_function, ControlStage, DpScale, ScheduleOptions,
};
use gridswitch::dfec::{nadir_cost, DfecAction};
use gridswitch::grid::{build_reduced_model, GridSystem, ReducedModel, StateVector};
use gridswitch::modal::{analyze, ModalBasis};
use gridswitch::scenario::DfecScenario;
use gridswitch::sim::{simulate_deoc, Disturbance};
use proptest::prelude::*;
use std::sync::OnceLock;

fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn wscc9() -> &'static (ReducedModel, ModalBasis) {
    static CELL: OnceLock<(ReducedModel, ModalBasis)> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = GridSystem::from_path(data("wscc9.json")).unwrap();
        let m = build_reduced_model(&sys).unwrap();
        let b = analyze(&m).unwrap();
        (m, b)
    })
}

fn offset(m: &ReducedModel, v: &[f64]) -> StateVector {
    let mut x = m.x_e.clone();
    for (i, d) in v.iter().enumerate() {
        x[i] += d;
    }
    x
}

fn state_offset() -> impl Strategy<Value = Vec<f64>> {
    // Angles within ±0.3 rad, speeds within ±0.005 pu.
    (
        prop::collection::vec(-0.3..0.3f64, 2),
        prop::collection::vec(-0.005..0.005f64, 2),
    )
        .prop_map(|(a, w)| a.into_iter().chain(w).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn propagation_is_linear_about_equilibrium(v in state_offset(), k in -3.0..3.0f64, t in 0.0..20.0f64) {
        let (m, b) = wscc9();
        let x1 = b.propagate(&m.x_e, &offset(m, &v), t).unwrap() - &m.x_e;
        let scaled: Vec<f64> = v.iter().map(|d| k * d).collect();
        let xk = b.propagate(&m.x_e, &offset(m, &scaled), t).unwrap() - &m.x_e;
        let err = (&xk - &x1 * k).amax();
        prop_assert!(err <= 1e-10 * (1.0 + x1.amax() * k.abs()), "err {err}");
    }

    #[test]
    fn orbit_value_is_conserved(v in state_offset(), t in 0.0..50.0f64) {
        let (m, b) = wscc9();
        let x0 = offset(m, &v);
        let xt = b.propagate(&m.x_e, &x0, t).unwrap();
        let (o0, ot) = (b.orbit_value(&m.x_e, &x0), b.orbit_value(&m.x_e, &xt));
        prop_assert!((o0 - ot).abs() <= 1e-9 * o0.max(1e-300), "{o0} vs {ot}");
    }

    #[test]
    fn switching_function_vanishes_on_orbits_through_equilibrium(
        v in state_offset(), t in 0.0..5.0f64, shift in prop::collection::vec(-0.2..0.2f64, 2)
    ) {
        // Any orbit about x_c that passes through x_e gives h = 0 along it.
        let (m, b) = wscc9();
        let _ = v;
        let x_c = offset(m, &shift);
        let x = b.propagate(&x_c, &m.x_e, t).unwrap();
        let h = switching_function(b, &m.x_e, &x_c, &x);
        let scale = b.orbit_value(&x_c, &m.x_e).abs().max(1e-300);
        prop_assert!(h.abs() <= 1e-8 * scale, "h {h} scale {scale}");
    }

    #[test]
    fn simulation_is_deterministic_and_grid_independent(v in state_offset(), dt in 0.004..0.02f64) {
        let (m, b) = wscc9();
        let d = Disturbance::InitialState { t0: 0.0, x0: offset(m, &v).iter().copied().collect() };
        let stages = [ControlStage::new(vec![0.05, -0.02, 0.0, 0.03, 0.0, -0.01], 0.31, 0.77)];
        let a = simulate_deoc(m, b, &d, &stages, 2.0, dt).unwrap();
        let again = simulate_deoc(m, b, &d, &stages, 2.0, dt).unwrap();
        prop_assert_eq!(a.to_csv_string().unwrap(), again.to_csv_string().unwrap());
        let half = simulate_deoc(m, b, &d, &stages, 2.0, dt / 2.0).unwrap();
        for (k, t) in a.times.iter().enumerate() {
            let j = half.times.iter().position(|s| s == t).expect("shared stamp");
            prop_assert_eq!(&a.states[k], &half.states[j]);
        }
    }

    #[test]
    fn every_scheduled_stage_lowers_the_energy(v in state_offset()) {
        let (m, b) = wscc9();
        let x0 = offset(m, &v);
        let plans = default_plans(b, &m.x_e, &x0, 2, DpScale::Relative(1.0));
        let s = build_schedule(b, m, 0.0, &x0, &plans, &ScheduleOptions::default()).unwrap();
        for st in &s.stages {
            let d = st.diagnostics.as_ref().unwrap();
            prop_assert!(d.level_off < d.level_on, "{} -> {}", d.level_on, d.level_off);
        }
    }

    #[test]
    fn zero_injection_is_a_no_op(v in state_offset(), on in 0.0..1.0f64, len in 0.05..1.0f64) {
        let (m, b) = wscc9();
        let d = Disturbance::InitialState { t0: 0.0, x0: offset(m, &v).iter().copied().collect() };
        let free = simulate_deoc(m, b, &d, &[], 2.5, 0.01).unwrap();
        let ctl = simulate_deoc(m, b, &d, &[ControlStage::new(vec![0.0; 6], on, on + len)], 2.5, 0.01).unwrap();
        for (x, y) in free.states.iter().zip(&ctl.states) {
            for (p, q) in x.iter().zip(y) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
    }
}

fn dfec() -> &'static DfecScenario {
    static CELL: OnceLock<DfecScenario> = OnceLock::new();
    CELL.get_or_init(|| DfecScenario::from_path(data("dfec_two_machine.json")).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dfec_cost_is_continuous_in_switch_on(dp in 0.0..0.2f64, on in 0.0..8.0f64, len in 1.0..20.0f64) {
        let sc = dfec();
        let a = DfecAction { dp, t_on: on, t_off: on + len };
        let b = DfecAction { t_on: on + 1e-3, ..a };
        let ca = nadir_cost(&sc.model, &a, &sc.disturbance, &sc.sim).unwrap();
        let cb = nadir_cost(&sc.model, &b, &sc.disturbance, &sc.sim).unwrap();
        prop_assert!((ca - cb).abs() < 1e-3, "{ca} vs {cb}");
    }

    #[test]
    fn dfec_injection_leaves_steady_state_unchanged(dp in 0.0..0.2f64, on in 0.0..8.0f64, len in 1.0..30.0f64) {
        let sc = dfec();
        let free = gridswitch::dfec::simulate(&sc.model, &DfecAction::NONE, &sc.disturbance, &sc.sim).unwrap();
        let a = DfecAction { dp, t_on: on, t_off: on + len };
        let ctl = gridswitch::dfec::simulate(&sc.model, &a, &sc.disturbance, &sc.sim).unwrap();
        prop_assert!((free.metrics.omega_ss - ctl.metrics.omega_ss).abs() < 1e-4);
    }
}
