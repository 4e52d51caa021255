use proptest::prelude::*;

use svrqsts::engine::SimulationConfig;
use svrqsts::predispatch::{achievable_average, average_power, compute_schedule, verify_direct_flow, DispatchSchedule, Forecast, PredispatchParams};
use svrqsts::scenarios::*;
use svrqsts::DispatchError;

const DAY: f64 = 86_400.0;

/// Trapezoidal mean of the schedule sampled every second.
fn sampled_mean(s: &DispatchSchedule) -> f64 {
    let n = DAY as usize;
    let mut area = 0.0;
    let mut prev = s.value_at(0.0);
    for k in 1..=n {
        let v = s.value_at(k as f64);
        area += 0.5 * (prev + v);
        prev = v;
    }
    area / DAY
}

fn check_schedule(f: &Forecast, p: &PredispatchParams, s: &DispatchSchedule) -> Result<(), TestCaseError> {
    let pts = s.points();
    prop_assert_eq!(pts.first().unwrap().0, 0.0);
    prop_assert_eq!(pts.last().unwrap().0, DAY);
    prop_assert!((pts[0].1 - pts[pts.len() - 1].1).abs() < 1e-9);
    prop_assert!(s.max_abs_slope_mw_per_min() <= p.ramp_limit_mw_per_min * (1.0 + 1e-9));
    for k in (0..=DAY as usize).step_by(30) {
        let t = k as f64;
        let v = s.value_at(t);
        prop_assert!(v <= p.margin * f.curve().eval(t) + 1e-9, "t={} p={} L={}", t, v, f.curve().eval(t));
        prop_assert!(v >= p.p_min_mw - 1e-9 && v <= p.p_max_mw + 1e-9);
    }
    Ok(())
}

#[test]
fn two_level_forecast() {
    let f = Forecast::new(vec![(0.0, 2.0), (43_200.0, 2.0), (43_260.0, 6.0), (DAY, 6.0)]).unwrap();
    let p = PredispatchParams::default();
    let s = compute_schedule(&f, &p).unwrap();
    let avg = sampled_mean(&s);
    assert!((avg - 3.0).abs() <= 3.0e-3, "{avg}");
    assert!((average_power(&s) - 3.0).abs() <= 3.0e-3);
    check_schedule(&f, &p, &s).unwrap();
    // Light hours export less than heavy hours.
    assert!(s.value_at(6.0 * 3600.0) < s.value_at(18.0 * 3600.0));
}

fn hourly(values: &[f64]) -> Forecast {
    let n = values.len() - 1;
    Forecast::new(
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 * DAY / n as f64, *v))
            .collect(),
    )
    .unwrap()
}

#[test]
fn slow_forecast_achievable_is_margin_times_mean() {
    let f = hourly(&[3.0, 2.8, 2.6, 2.5, 2.5, 2.7, 3.2, 3.8, 4.1, 4.2, 4.1, 4.0, 3.9, 3.9, 4.0, 4.2, 4.5, 4.9, 5.2, 5.3, 5.0, 4.4, 3.7, 3.2, 3.0]);
    let p = PredispatchParams {
        contract_avg_mw: 100.0,
        ..Default::default()
    };
    match compute_schedule(&f, &p) {
        Err(DispatchError::Infeasible { achievable_mw, .. }) => {
            assert!((achievable_mw - 0.9 * f.mean()).abs() < 1e-9, "{achievable_mw}");
            assert_eq!(achievable_average(&f, &p).unwrap(), achievable_mw);
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn bad_parameters_are_rejected() {
    let f = hourly(&[4.0, 4.0]);
    for p in [
        PredispatchParams {
            margin: 1.0,
            ..Default::default()
        },
        PredispatchParams {
            ramp_limit_mw_per_min: 0.0,
            ..Default::default()
        },
        PredispatchParams {
            p_min_mw: 2.0,
            p_max_mw: 1.0,
            ..Default::default()
        },
    ] {
        assert!(matches!(compute_schedule(&f, &p), Err(DispatchError::Invalid(_))));
    }
    let p = PredispatchParams {
        p_min_mw: 2.0,
        contract_avg_mw: 1.0,
        ..Default::default()
    };
    assert!(matches!(compute_schedule(&f, &p), Err(DispatchError::BelowMinimum { .. })));
}

fn arb_forecast() -> impl Strategy<Value = Forecast> {
    prop::collection::vec(0.5f64..8.0, 2..30).prop_map(|v| hourly(&v))
}

fn achievable(f: &Forecast, p: &PredispatchParams) -> f64 {
    let p = PredispatchParams {
        contract_avg_mw: 1e6,
        ..*p
    };
    match compute_schedule(f, &p) {
        Err(DispatchError::Infeasible { achievable_mw, .. }) => achievable_mw,
        other => panic!("expected infeasible, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn feasible_schedules_meet_every_invariant(
        f in arb_forecast(),
        frac in 0.05f64..0.999,
        ramp in 0.05f64..2.0,
        p_max in 2.0f64..12.0,
    ) {
        let base = PredispatchParams {
            ramp_limit_mw_per_min: ramp,
            p_max_mw: p_max,
            ..Default::default()
        };
        let top = achievable(&f, &base);
        let p = PredispatchParams { contract_avg_mw: frac * top, ..base };
        let s = compute_schedule(&f, &p).unwrap();
        let avg = sampled_mean(&s);
        prop_assert!((avg - p.contract_avg_mw).abs() <= 1e-3 * p.contract_avg_mw, "{} vs {}", avg, p.contract_avg_mw);
        check_schedule(&f, &p, &s)?;
    }

    #[test]
    fn scaling_demand_up_never_lowers_the_achievable_average(f in arb_forecast(), k in 1.0f64..3.0) {
        let p = PredispatchParams::default();
        prop_assert!(achievable(&f.scaled(k), &p) >= achievable(&f, &p) - 1e-9);
    }
}

fn day(dt: f64) -> SimulationConfig {
    SimulationConfig {
        dt_s: dt,
        ..Default::default()
    }
}

#[test]
fn verification_controls() {
    let p = CaseParams::default();
    let net = build_case_feeders(&p).unwrap();
    let prof = p.profiles().unwrap();

    let zero = DispatchSchedule::constant(0.0, DAY);
    let r = verify_direct_flow(&zero, &net, DG, &prof, &[], &day(60.0)).unwrap();
    assert!(r.all_direct());
    assert!(r.min_margin_mw > 0.0);

    let three = DispatchSchedule::constant(3.0, DAY);
    let r = verify_direct_flow(&three, &net, DG, &prof, &[], &day(60.0)).unwrap();
    for id in [SVR_A, SVR_B] {
        assert!(r.svrs.iter().find(|s| s.svr == id).unwrap().reverse_steps > 0);
    }
    assert!(!r.all_direct());
    assert!(verify_direct_flow(&zero, &net, "nope", &prof, &[], &day(60.0)).is_err());
}

#[test]
fn partial_transfer_schedule_keeps_flow_direct() {
    let p = CaseParams::default().predispatch_study();
    let f = partial_transfer_forecast(&p).unwrap();
    let s = compute_schedule(&f, &p.predispatch_params()).unwrap();
    assert!((average_power(&s) - 3.0).abs() <= 3.0e-3);
    let net = with_preset(&build_case_feeders(&p).unwrap(), ScenarioPreset::PartialTransfer).unwrap();
    let r = verify_direct_flow(&s, &net, DG, &p.profiles().unwrap(), &[], &day(60.0)).unwrap();
    assert!(r.all_direct(), "{:?}", r.svrs);
    assert!(r.min_margin_mw > 0.0);
}
