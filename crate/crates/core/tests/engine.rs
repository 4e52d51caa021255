mod common;

use num_complex::Complex64;

use common::*;
use svrqsts::control::{ControlMode, RunawayCriteria};
use svrqsts::engine::{run, summarize, BranchTrace, BusTrace, RecordSelection, SimulationConfig, SvrTrace, TimeSeries, VoltageBand};
use svrqsts::grid::{Demand, Dispatch, LoadPoint, Network, SwitchState};
use svrqsts::profile::{LoadProfile, ProfileSet};
use svrqsts::record::{fmt6, quantize, write_flows, write_taps, write_voltages};
use svrqsts::scenarios::*;
use svrqsts::{EngineError, FlowDirection, ScenarioEvent};

fn case() -> (ProfileSet, Network) {
    let p = CaseParams::default();
    (p.profiles().unwrap(), build_case_feeders(&p).unwrap())
}

fn cfg(dt: f64, duration: f64) -> SimulationConfig {
    SimulationConfig {
        dt_s: dt,
        duration_s: duration,
        ..Default::default()
    }
}

#[test]
fn row_count_is_duration_over_dt_plus_one() {
    let (prof, net) = case();
    for (dt, dur, rows) in [(1.0, 250.0, 251), (60.0, 86_400.0, 1441), (1.0, 0.0, 1)] {
        let out = run(&net, &prof, &[], &cfg(dt, dur)).unwrap();
        assert_eq!(out.series.len(), rows);
        assert_eq!(out.summary.steps, rows);
        for s in &out.series.svrs {
            assert_eq!(s.tap.len(), rows);
        }
    }
}

#[test]
fn bad_configs_are_rejected() {
    let (prof, net) = case();
    assert!(matches!(run(&net, &prof, &[], &cfg(0.0, 10.0)), Err(EngineError::Config(_))));
    assert!(matches!(run(&net, &prof, &[], &cfg(7.0, 10.0)), Err(EngineError::Config(_))));
    let late = trip_event(CB1, 500.0).unwrap();
    assert!(matches!(run(&net, &prof, &[late], &cfg(1.0, 250.0)), Err(EngineError::Config(_))));
    let unknown = ScenarioEvent {
        time_s: 1.0,
        device: "CB7".into(),
        new_state: SwitchState::Open,
    };
    assert!(matches!(run(&net, &prof, &[unknown], &cfg(1.0, 250.0)), Err(EngineError::Config(_))));
}

#[test]
fn identical_runs_are_identical() {
    let (prof, net) = case();
    let ev = reconfiguration_events(ScenarioPreset::Independent, CB1, 20.0).unwrap();
    let a = run(&net, &prof, &ev, &cfg(1.0, 250.0)).unwrap();
    let b = run(&net, &prof, &ev, &cfg(1.0, 250.0)).unwrap();
    assert_eq!(a.series, b.series);
    assert_eq!(a.summary.to_string(), b.summary.to_string());
}

#[test]
fn commands_act_on_the_next_step_only() {
    let (prof, net) = case();
    let net = with_mode(&net, ControlMode::Bidirectional);
    let long = run(&net, &prof, &[], &cfg(1.0, 250.0)).unwrap();
    let a = long.series.svr(SVR_A).unwrap();
    let k = a.event.iter().position(|e| *e).unwrap();
    assert_eq!(a.tap[k], a.tap[k - 1]);
    assert_eq!((a.tap[k + 1] - a.tap[k]).abs(), 1);

    // A run that stops at the issuing step sees exactly the same solutions.
    let short = run(&net, &prof, &[], &cfg(1.0, k as f64)).unwrap();
    for b in &short.series.buses {
        assert_eq!(b.vmag_pu[..], long.series.vmag(&b.id).unwrap()[..=k]);
    }

    for s in &long.series.svrs {
        let n = long.commands.iter().filter(|c| c.svr == s.id).count();
        assert_eq!(long.summary.svr(&s.id).unwrap().tap_operations, n);
        for w in 1..s.tap.len() {
            assert_eq!(s.tap[w] - s.tap[w - 1] != 0, s.event[w - 1]);
        }
    }
}

#[test]
fn settled_flat_day_has_no_tap_operations() {
    let p = CaseParams::default();
    let mut net = build_case_feeders(&p).unwrap();
    net.generators[0].export = Dispatch::Constant(0.0);
    let flat: ProfileSet = p
        .profiles()
        .unwrap()
        .into_iter()
        .map(|(k, v)| (k, LoadProfile::constant(v.min_max().1, 86_400.0)))
        .collect();
    let net = settle_taps(&net, &flat, 0.0, 1800.0, &cfg(1.0, 1800.0)).unwrap();
    let out = run(&net, &flat, &[], &cfg(10.0, 86_400.0)).unwrap();
    assert!(out.summary.svrs.iter().all(|s| s.tap_operations == 0));
}

#[test]
fn switching_into_a_loop_aborts_at_that_step() {
    let (prof, net) = case();
    let close = ScenarioEvent {
        time_s: 12.0,
        device: SW2.into(),
        new_state: SwitchState::Closed,
    };
    match run(&net, &prof, &[close], &cfg(1.0, 60.0)) {
        Err(EngineError::Topology { step, time_s, .. }) => assert_eq!((step, time_s), (12, 12.0)),
        other => panic!("expected topology error, got {other:?}"),
    }
}

#[test]
fn de_energized_buses_read_zero() {
    let (prof, net) = case();
    let trip = trip_event(CB1, 5.0).unwrap();
    let out = run(
        &net,
        &prof,
        &[trip],
        &SimulationConfig {
            duration_s: 10.0,
            record: RecordSelection {
                buses: vec![BUS_172.into()],
                branches: vec![],
            },
            ..Default::default()
        },
    )
    .unwrap();
    let v = out.series.vmag(BUS_172).unwrap();
    assert!(v[4] > 0.9);
    assert!(v[5..].iter().all(|x| *x == 0.0));
}

#[test]
fn divergence_aborts_with_step_index() {
    let (prof, mut net) = case();
    net.loads.push(LoadPoint {
        id: "huge".into(),
        bus: "24".into(),
        demand: Demand::Fixed {
            p_mw: 500.0,
            q_mvar: 200.0,
        },
    });
    match run(&net, &prof, &[], &cfg(1.0, 10.0)) {
        Err(EngineError::NonConvergence { step, .. }) => assert_eq!(step, 0),
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

fn synthetic(v: Vec<f64>, taps: Vec<i32>) -> TimeSeries {
    let n = v.len();
    let event = taps.windows(2).map(|w| w[0] != w[1]).chain([false]).collect();
    TimeSeries {
        dt_s: 1.0,
        time_s: (0..n).map(|k| k as f64).collect(),
        buses: vec![
            BusTrace {
                id: "X".into(),
                vmag_pu: v,
            },
            BusTrace {
                id: "Y".into(),
                vmag_pu: vec![1.0; n],
            },
        ],
        branches: vec![BranchTrace {
            id: "R".into(),
            p_mw: vec![1.0; n],
            q_mvar: vec![0.0; n],
            direction: vec![FlowDirection::Direct; n],
        }],
        svrs: vec![SvrTrace {
            id: "R".into(),
            source_bus: "Y".into(),
            load_bus: "Y".into(),
            params: params(1.0, 30.0, ControlMode::Cogeneration),
            step_pu: 0.00625,
            tap: taps,
            event,
        }],
    }
}

#[test]
fn summary_examples() {
    let band = VoltageBand::default();
    let crit = RunawayCriteria::default();

    let ts = synthetic(vec![1.0; 900], vec![0; 900]);
    let s = summarize(&ts, &band, &crit);
    assert_eq!(s.bus("X").unwrap().minutes_outside, 0.0);
    assert_eq!(s.branches[0].energy_mwh, 900.0 / 3600.0);

    let mut v = vec![1.0; 900];
    v[100..700].iter_mut().for_each(|x| *x = 1.10);
    let s = summarize(&synthetic(v, vec![0; 900]), &band, &crit);
    assert_eq!(s.bus("X").unwrap().minutes_outside, 10.0);
    assert_eq!(s.bus("X").unwrap().v_max_pu, Some(1.10));

    let taps: Vec<i32> = (0..900).map(|k| (k as i32 / 20).min(16)).collect();
    let s = summarize(&synthetic(vec![1.0; 900], taps), &band, &crit);
    assert_eq!(s.svr("R").unwrap().tap_operations, 16);
    assert_eq!(s.svr("R").unwrap().final_tap, 16);
}

#[test]
fn csv_layout() {
    let (prof, net) = case();
    let out = run(&net, &prof, &[], &cfg(1.0, 5.0)).unwrap();
    let ts = quantize(&out.series);
    let mut v = Vec::new();
    write_voltages(&ts, &mut v).unwrap();
    let v = String::from_utf8(v).unwrap();
    let lines: Vec<&str> = v.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("time_s,"));
    assert!(lines[1].starts_with("0.000000,"));
    assert_eq!(lines[1].split(',').count(), ts.buses.len() + 1);

    let mut f = Vec::new();
    write_flows(&ts, &mut f).unwrap();
    let f = String::from_utf8(f).unwrap();
    assert_eq!(f.lines().next().unwrap(), "time_s,branch,p_mw,q_mvar,direction");
    assert_eq!(f.lines().count(), 1 + 6 * ts.branches.len());

    let mut t = Vec::new();
    write_taps(&ts, &mut t).unwrap();
    let t = String::from_utf8(t).unwrap();
    assert_eq!(t.lines().next().unwrap(), "time_s,svr,tap,event");
    assert_eq!(t.lines().count(), 1 + 6 * ts.svrs.len());

    assert_eq!(fmt6(-1e-9), "0.000000");
    assert_eq!(fmt6(1.0000005), "1.000001");
    assert_eq!(quantize(&ts), ts);
}

#[test]
fn empty_and_fixed_injections_need_no_profiles() {
    let mut net = empty_net("S", Complex64::new(0.01, 0.1));
    net.buses.push(bus("A"));
    net.lines.push(line("S", "A", Complex64::new(0.02, 0.04)));
    let out = run(&net, &ProfileSet::new(), &[], &cfg(1.0, 3.0)).unwrap();
    assert_eq!(out.series.len(), 4);
    assert!(out.series.svrs.is_empty());

    net.loads.push(LoadPoint {
        id: "p".into(),
        bus: "A".into(),
        demand: Demand::Profile {
            profile: "missing".into(),
            scale: 1.0,
            power_factor: 0.9,
        },
    });
    assert!(matches!(
        run(&net, &ProfileSet::new(), &[], &cfg(1.0, 3.0)),
        Err(EngineError::Profile(_))
    ));
}
