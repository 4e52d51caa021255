use svrqsts::engine::{run, RecordSelection, SimulationConfig};
use svrqsts::grid::{Demand, Dispatch, Network, SwitchState};
use svrqsts::GridError;
use svrqsts::profile::{LoadProfile, ProfileSet};
use svrqsts::scenarios::*;
use svrqsts::topology::validate_topology;
use svrqsts::FlowDirection;

fn case() -> (CaseParams, Network) {
    let p = CaseParams::default();
    let net = build_case_feeders(&p).unwrap();
    (p, net)
}

fn all_buses(net: &Network) -> RecordSelection {
    RecordSelection {
        buses: net.buses.iter().map(|b| b.id.clone()).collect(),
        branches: vec![],
    }
}

#[test]
fn presets_have_the_four_switch_combinations() {
    let bits = |p| {
        let s = preset(p);
        [CB1, CB2, SW1, SW2].map(|d| s.get(d).unwrap().bit())
    };
    assert_eq!(bits(ScenarioPreset::Independent), [1, 1, 1, 0]);
    assert_eq!(bits(ScenarioPreset::FullToPR09), [1, 0, 1, 1]);
    assert_eq!(bits(ScenarioPreset::FullToPR11), [0, 1, 1, 1]);
    assert_eq!(bits(ScenarioPreset::PartialTransfer), [1, 1, 0, 1]);
    assert_eq!(preset_by_name("partialtransfer").unwrap(), preset(ScenarioPreset::PartialTransfer));
    assert!(preset_by_name("Meshed").is_err());
}

#[test]
fn independent_is_two_radial_islands() {
    let (_, net) = case();
    let r = validate_topology(&net, &preset(ScenarioPreset::Independent)).unwrap();
    let islands: Vec<_> = r.energized_islands().collect();
    assert_eq!(islands.len(), 2);
    assert!(islands.iter().all(|i| i.radial));
    assert!(r.de_energized_buses.is_empty());
    let pr09 = islands.iter().find(|i| i.buses.iter().any(|b| b == BUS_1050)).unwrap();
    assert!(!pr09.buses.iter().any(|b| b == "24"));
}

#[test]
fn closing_everything_is_a_loop() {
    let (_, net) = case();
    let mut s = preset(ScenarioPreset::Independent);
    s.set(SW2, SwitchState::Closed);
    assert!(matches!(validate_topology(&net, &s), Err(GridError::Loop { .. })));
}

#[test]
fn every_preset_is_a_forest_of_trees() {
    let (_, net) = case();
    for p in ScenarioPreset::ALL {
        let states = preset(p);
        let r = validate_topology(&net, &states).unwrap();
        assert_eq!(r, validate_topology(&net, &states).unwrap());
        for island in r.energized_islands() {
            let inside = |b: &String| island.buses.contains(b);
            let closed = |id: &str| states.get(id).map_or(true, |s| s.is_closed());
            let edges = net.lines.iter().filter(|l| inside(&l.from) && inside(&l.to)).count()
                + net
                    .switches
                    .iter()
                    .filter(|s| closed(&s.id) && inside(&s.from) && inside(&s.to))
                    .count()
                + net
                    .svrs
                    .iter()
                    .filter(|s| inside(&s.source_bus) && inside(&s.load_bus))
                    .count();
            assert_eq!(edges, island.buses.len() - 1, "{p:?}");
        }
    }
}

#[test]
fn full_transfer_to_pr11_is_one_island() {
    let (_, net) = case();
    let r = validate_topology(&net, &preset(ScenarioPreset::FullToPR11)).unwrap();
    assert_eq!(r.energized_islands().count(), 1);
    assert!(r.de_energized_buses.is_empty());
}

#[test]
fn trip_events() {
    let e = trip_event(CB1, 20.0).unwrap();
    assert_eq!((e.device.as_str(), e.time_s, e.new_state), (CB1, 20.0, SwitchState::Open));
    assert_eq!(trip_event(CB2, 20.0).unwrap().device, CB2);
    assert_eq!(trip_event(SW2, 0.0).unwrap().time_s, 0.0);
    assert!(matches!(trip_event("CB9", 1.0), Err(GridError::UnknownDevice(_))));

    let ev = reconfiguration_events(ScenarioPreset::Independent, CB1, 20.0).unwrap();
    let mut s = preset(ScenarioPreset::Independent);
    for e in &ev {
        assert_eq!(e.time_s, 20.0);
        s.set(e.device.clone(), e.new_state);
    }
    assert_eq!(s, preset(ScenarioPreset::FullToPR11));
}

fn peak_total(net: &Network, profiles: &ProfileSet, prefix: &str) -> f64 {
    let peak = |name: &str| profiles[name].min_max().1;
    net.loads
        .iter()
        .filter(|l| l.id.starts_with(prefix) || (prefix == "PR09" && l.id == "industry"))
        .map(|l| match &l.demand {
            Demand::Profile { profile, scale, .. } => scale * peak(profile),
            Demand::Fixed { p_mw, .. } => *p_mw,
            Demand::ProfileQ { .. } => unreachable!(),
        })
        .sum()
}

#[test]
fn feeder_totals_track_published_ranges() {
    let (p, net) = case();
    let profiles = p.profiles().unwrap();
    assert!((peak_total(&net, &profiles, "PR09") - (2.55 + 4.3)).abs() < 1e-9);
    assert!((peak_total(&net, &profiles, "PR11") - 4.03).abs() < 1e-9);
    assert_eq!(profiles[PROFILE_PR09].min_max(), (2.13, 2.55));
    assert_eq!(profiles[PROFILE_PR11].min_max(), (1.22, 4.03));
}

#[test]
fn main_branches_are_about_100_km() {
    let p = CaseParams::default();
    for segs in [&p.pr09_segments, &p.pr11_segments] {
        let km: f64 = segs.iter().map(|s| s.length_km).sum();
        assert!((90.0..=110.0).contains(&km), "{km}");
    }
}

#[test]
fn published_parameters() {
    let (p, net) = case();
    assert_eq!(net.sources[0].z1_ohm, num_complex::Complex64::new(1.369, 17.633));
    assert_eq!(net.buses[0].nominal_kv, 34.5);
    assert_eq!(p.contract_export_mw, 3.0);
    assert_eq!(net.generators[0].rating_mva, 12.5);
    let t1 = |id: &str| net.svr(id).unwrap().controller.t1_s;
    assert_eq!((t1(SVR_A), t1(SVR_B)), (30.0, 45.0));
    assert_eq!((t1(SVR_2_3), t1(SVR_15_16)), (30.0, 45.0));
    assert!(net.svrs.iter().all(|s| s.controller.t2_s == 5.0));
    assert_eq!(penetration_pct(3.0, 2.55).map(|x| (x * 100.0).round() / 100.0), Some(117.65));
    assert_eq!(penetration_pct(3.0, 0.0), None);
}

fn frozen_at(p: &CaseParams, t: f64) -> ProfileSet {
    p.profiles()
        .unwrap()
        .into_iter()
        .map(|(k, v)| (k, LoadProfile::constant(v.curve().eval(t), 0.0)))
        .collect()
}

#[test]
fn without_regulation_the_far_ends_sag_at_peak() {
    let (p, mut net) = case();
    net.generators[0].export = Dispatch::Constant(0.0);
    let peak = 19.0 * 3600.0;
    let cfg = SimulationConfig {
        duration_s: 0.0,
        record: all_buses(&net),
        ..Default::default()
    };
    let out = run(&net, &frozen_at(&p, peak), &[], &cfg).unwrap();
    for far in [BUS_1050, "24"] {
        let v = out.series.vmag(far).unwrap()[0];
        assert!(v < 0.93, "{far}: {v}");
    }
}

#[test]
fn with_regulation_the_far_ends_are_in_band_all_day() {
    let (p, mut net) = case();
    net.generators[0].export = Dispatch::Constant(0.0);
    let profiles = p.profiles().unwrap();
    let short = SimulationConfig {
        duration_s: 1800.0,
        record: all_buses(&net),
        ..Default::default()
    };
    let net = settle_taps(&net, &profiles, 0.0, 1800.0, &short).unwrap();
    let cfg = SimulationConfig {
        dt_s: 10.0,
        record: all_buses(&net),
        ..Default::default()
    };
    let out = run(&net, &profiles, &[], &cfg).unwrap();
    for far in [BUS_1050, BUS_IPP, "24"] {
        assert_eq!(out.summary.bus(far).unwrap().minutes_outside, 0.0, "{far}");
    }
    assert!(out.summary.runaway_events.is_empty());
}

#[test]
fn contract_export_reverses_both_pr09_regulators_all_day() {
    let (p, net) = case();
    let cfg = SimulationConfig {
        dt_s: 60.0,
        ..Default::default()
    };
    let out = run(&net, &p.profiles().unwrap(), &[], &cfg).unwrap();
    for id in [SVR_A, SVR_B] {
        let dirs = &out.series.branch(id).unwrap().direction;
        assert!(dirs.iter().all(|d| *d == FlowDirection::Reverse), "{id}");
    }
}

#[test]
fn partial_transfer_forecast_covers_the_moved_section() {
    let p = CaseParams::default();
    let f = partial_transfer_forecast(&p).unwrap();
    let profiles = p.profiles().unwrap();
    // 40 % of PR-09 plus PR-11 without the share ahead of SVR 2/3.
    let expect = 0.4 * profiles[PROFILE_PR09].curve().mean() + 0.95 * profiles[PROFILE_PR11].curve().mean();
    assert!((f.mean() - expect).abs() < 1e-9, "{} vs {expect}", f.mean());
}

#[test]
fn study_settings() {
    let p = CaseParams::default().partial_transfer_settings();
    assert_eq!((p.svr_2_3.v_ref_pu, p.svr_15_16.v_ref_pu), (0.975, 1.0));
    assert_eq!(p.pr09_svr.v_ref_pu, 0.97);
    let d = CaseParams::default().predispatch_study();
    let net = build_case_feeders(&d).unwrap();
    assert!(net
        .svrs
        .iter()
        .all(|s| s.controller.mode == svrqsts::ControlMode::Bidirectional));
}
