//! Surrogate of the PR-09/PR-11 twin 34.5 kV feeders.
//!
//! Published data (source impedance, demand ranges, industry load, generator
//! contract, regulator delays) are used as given. The segment layout and
//! conductor constants are representative ACSR values chosen so that the
//! regulators are genuinely needed; they are not utility data and every one
//! of them can be overridden.
//!
//! ```text
//!                   PR-09
//!  SE ─CB1─ 901 ── 172 ── 903 ═SVR_A═ 904 ── 905 ── 907 ═SVR_B═ 908 ── 909 ─SW1─ 910 ── 1050 ── IPP (DG)
//!   │                                                                                  │
//!   │                                                                                 SW2
//!   │               PR-11                                                              │
//!   └─CB2─ 1 ── 2 ═SVR2/3═ 3 ── 6 ── 10 ── 15 ═SVR15/16═ 16 ── 20 ── 24                  │
//!                               └── T ─────────────────────────────────────────────────┘
//! ```
//!
//! Regulator settings: PR-09 at 0.97 pu (generator study), PR-11 at 1 pu.
//! [`CaseParams::partial_transfer_settings`] and
//! [`CaseParams::predispatch_study`] switch to the settings used with SW1 open.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::{assign_cascade_delays, ControlMode, SvrControllerParams};
use crate::engine::{run, ScenarioEvent, SimulationConfig};
use crate::error::{EngineError, GridError, ProfileError};
use crate::grid::{
    Bus, Demand, Dispatch, GridSource, Line, LoadPoint, Network, SvrDevice, SwitchDevice, SwitchKind, SwitchState,
    SwitchStates, DEFAULT_TAP_STEP_PU,
};
use crate::predispatch::{Forecast, PredispatchParams};
use crate::profile::{LoadProfile, ProfileSet};

pub const CB1: &str = "CB1";
pub const CB2: &str = "CB2";
pub const SW1: &str = "SW1";
pub const SW2: &str = "SW2";
pub const SVR_A: &str = "SVR_A";
pub const SVR_B: &str = "SVR_B";
pub const SVR_2_3: &str = "SVR2/3";
pub const SVR_15_16: &str = "SVR15/16";
pub const BUS_1050: &str = "1050";
pub const BUS_IPP: &str = "IPP";
pub const BUS_172: &str = "172";
pub const SUBSTATION: &str = "SE";
pub const DG: &str = "DG";
pub const PROFILE_PR09: &str = "pr09";
pub const PROFILE_PR11: &str = "pr11";

/// Conductor constants, Ω/km (positive sequence).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conductor {
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
}

/// One line segment of the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: String,
    pub to: String,
    pub length_km: f64,
    pub conductor: String,
}

/// Share of a feeder's demand placed on a bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadShare {
    pub bus: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrSettingsParams {
    pub v_ref_pu: f64,
    pub deadband_pu: f64,
    pub hysteresis_pu: f64,
    pub mode: ControlMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseParams {
    pub base_kv: f64,
    pub base_mva: f64,
    pub v_source_pu: f64,
    pub z1_ohm: Complex64,
    pub z0_ohm: Complex64,
    /// Daily min/max of PR-09 demand excluding the industry, MW.
    pub pr09_demand_mw: (f64, f64),
    pub pr11_demand_mw: (f64, f64),
    pub load_power_factor: f64,
    pub industry_p_mw: f64,
    pub industry_q_mvar: f64,
    pub dg_rating_mva: f64,
    /// Reactive output of the generator. The default covers the plant's own
    /// reactive demand so that the exchange at the IPP bus is at unity power factor.
    pub dg_q_mvar: f64,
    pub contract_export_mw: f64,
    pub t1_ps_side_s: f64,
    pub t1_increment_s: f64,
    pub t2_s: f64,
    pub pr09_svr: SvrSettingsParams,
    pub svr_2_3: SvrSettingsParams,
    pub svr_15_16: SvrSettingsParams,
    pub conductors: BTreeMap<String, Conductor>,
    pub pr09_segments: Vec<Segment>,
    pub pr11_segments: Vec<Segment>,
    pub tie_segments: Vec<Segment>,
    pub pr09_loads: Vec<LoadShare>,
    pub pr11_loads: Vec<LoadShare>,
    /// Daily shape as `(hour, fraction of the [min, max] range)`.
    pub profile_shape: Vec<(f64, f64)>,
}

fn seg(from: &str, to: &str, length_km: f64, conductor: &str) -> Segment {
    Segment {
        from: from.into(),
        to: to.into(),
        length_km,
        conductor: conductor.into(),
    }
}

fn share(bus: &str, share: f64) -> LoadShare {
    LoadShare { bus: bus.into(), share }
}

impl Default for CaseParams {
    fn default() -> Self {
        let conductors = [
            ("336MCM", 0.19, 0.38),
            ("4/0ACSR", 0.37, 0.41),
            ("1/0ACSR", 0.61, 0.44),
            ("2AWG", 0.90, 0.46),
        ]
        .into_iter()
        .map(|(n, r, x)| {
            (
                n.to_string(),
                Conductor {
                    r_ohm_per_km: r,
                    x_ohm_per_km: x,
                },
            )
        })
        .collect();
        CaseParams {
            base_kv: 34.5,
            base_mva: 10.0,
            v_source_pu: 1.05,
            z1_ohm: Complex64::new(1.369, 17.633),
            z0_ohm: Complex64::new(0.002, 12.13),
            pr09_demand_mw: (2.13, 2.55),
            pr11_demand_mw: (1.22, 4.03),
            load_power_factor: 0.97,
            industry_p_mw: 4.3,
            industry_q_mvar: 1.83,
            dg_rating_mva: 12.5,
            dg_q_mvar: 1.83,
            contract_export_mw: 3.0,
            t1_ps_side_s: 30.0,
            t1_increment_s: 15.0,
            t2_s: 5.0,
            pr09_svr: SvrSettingsParams {
                v_ref_pu: 0.97,
                deadband_pu: 0.01,
                hysteresis_pu: 0.0,
                mode: ControlMode::Cogeneration,
            },
            svr_2_3: SvrSettingsParams {
                v_ref_pu: 1.0,
                deadband_pu: 0.01,
                hysteresis_pu: 0.0,
                mode: ControlMode::Cogeneration,
            },
            svr_15_16: SvrSettingsParams {
                v_ref_pu: 1.0,
                deadband_pu: 0.01,
                hysteresis_pu: 0.0,
                mode: ControlMode::Cogeneration,
            },
            conductors,
            pr09_segments: vec![
                seg("901", BUS_172, 10.0, "336MCM"),
                seg(BUS_172, "903", 15.0, "4/0ACSR"),
                seg("904", "905", 20.0, "1/0ACSR"),
                seg("905", "907", 20.0, "2AWG"),
                seg("908", "909", 10.0, "1/0ACSR"),
                seg("910", BUS_1050, 20.0, "1/0ACSR"),
                seg(BUS_1050, BUS_IPP, 3.0, "1/0ACSR"),
            ],
            pr11_segments: vec![
                seg("1", "2", 5.0, "336MCM"),
                seg("3", "6", 15.0, "336MCM"),
                seg("6", "10", 15.0, "336MCM"),
                seg("10", "15", 15.0, "4/0ACSR"),
                seg("16", "20", 25.0, "1/0ACSR"),
                seg("20", "24", 25.0, "2AWG"),
            ],
            tie_segments: vec![seg("6", "T", 5.0, "1/0ACSR")],
            pr09_loads: vec![
                share(BUS_172, 0.20),
                share("905", 0.20),
                share("907", 0.10),
                share("909", 0.10),
                share("910", 0.20),
                share(BUS_1050, 0.20),
            ],
            pr11_loads: vec![
                share("2", 0.05),
                share("6", 0.20),
                share("10", 0.20),
                share("15", 0.15),
                share("20", 0.20),
                share("24", 0.20),
            ],
            profile_shape: vec![
                (0.0, 0.20),
                (4.0, 0.0),
                (6.0, 0.10),
                (8.0, 0.60),
                (12.0, 0.75),
                (16.0, 0.70),
                (19.0, 1.0),
                (21.0, 0.95),
                (23.0, 0.50),
                (24.0, 0.20),
            ],
        }
    }
}

impl CaseParams {
    fn validate(&self) -> Result<(), GridError> {
        let check = |ok: bool, what: &str, why: &str| if ok { Ok(()) } else { Err(GridError::invalid(what, why)) };
        check(self.base_kv > 0.0 && self.base_mva > 0.0, "bases", "must be positive")?;
        for (name, (lo, hi)) in [("pr09_demand_mw", self.pr09_demand_mw), ("pr11_demand_mw", self.pr11_demand_mw)] {
            check(lo >= 0.0 && hi >= lo, name, "need 0 <= min <= max")?;
        }
        check(
            self.load_power_factor > 0.0 && self.load_power_factor <= 1.0,
            "load_power_factor",
            "must be in (0, 1]",
        )?;
        check(
            (self.industry_p_mw + self.contract_export_mw).hypot(self.dg_q_mvar) <= self.dg_rating_mva,
            "contract_export_mw",
            "generator output exceeds its rating",
        )?;
        for (name, shares) in [("pr09_loads", &self.pr09_loads), ("pr11_loads", &self.pr11_loads)] {
            let total: f64 = shares.iter().map(|s| s.share).sum();
            check((total - 1.0).abs() < 1e-9, name, "shares must sum to 1")?;
        }
        let shape_ok = self.profile_shape.len() >= 2
            && self.profile_shape.first().map(|p| p.0) == Some(0.0)
            && self.profile_shape.last().map(|p| p.0) == Some(24.0)
            && self.profile_shape.iter().all(|p| (0.0..=1.0).contains(&p.1));
        check(shape_ok, "profile_shape", "must span hours 0..24 with fractions in [0, 1]")?;
        Ok(())
    }

    /// Settings used with PR-09's far section transferred to PR-11:
    /// SVR 2/3 at 0.975 pu and SVR 15/16 at 1 pu.
    pub fn partial_transfer_settings(mut self) -> Self {
        self.svr_2_3.v_ref_pu = 0.975;
        self.svr_15_16.v_ref_pu = 1.0;
        self
    }

    /// Pre-dispatch study: partial-transfer settings on PR-11, PR-09
    /// regulators back at 1 pu since PR-09 no longer hosts the generator,
    /// and every regulator bidirectional.
    pub fn predispatch_study(self) -> Self {
        let mut p = self.partial_transfer_settings();
        p.pr09_svr.v_ref_pu = 1.0;
        for s in [&mut p.pr09_svr, &mut p.svr_2_3, &mut p.svr_15_16] {
            s.mode = ControlMode::Bidirectional;
        }
        p
    }

    /// Daily profile scaled to `[min, max]` MW.
    pub fn daily_profile(&self, range: (f64, f64)) -> Result<LoadProfile, ProfileError> {
        let (lo, hi) = range;
        LoadProfile::new(
            self.profile_shape
                .iter()
                .map(|&(h, f)| (h * 3600.0, lo + f * (hi - lo)))
                .collect(),
        )
    }

    pub fn profiles(&self) -> Result<ProfileSet, ProfileError> {
        Ok([
            (PROFILE_PR09.to_string(), self.daily_profile(self.pr09_demand_mw)?),
            (PROFILE_PR11.to_string(), self.daily_profile(self.pr11_demand_mw)?),
        ]
        .into_iter()
        .collect())
    }

    pub fn predispatch_params(&self) -> PredispatchParams {
        PredispatchParams {
            contract_avg_mw: self.contract_export_mw,
            p_max_mw: (self.dg_rating_mva.powi(2) - self.dg_q_mvar.powi(2)).sqrt() - self.industry_p_mw,
            ..PredispatchParams::default()
        }
    }

    fn controller(&self, s: &SvrSettingsParams, t1_s: f64) -> SvrControllerParams {
        SvrControllerParams {
            v_ref_pu: s.v_ref_pu,
            deadband_pu: s.deadband_pu,
            hysteresis_pu: s.hysteresis_pu,
            t1_s,
            t2_s: self.t2_s,
            mode: s.mode,
        }
    }
}

/// Builds the twin-feeder surrogate in the Independent configuration with
/// the contract export as a constant dispatch.
pub fn build_case_feeders(params: &CaseParams) -> Result<Network, GridError> {
    params.validate()?;
    let kv = params.base_kv;
    let mut bus_ids: Vec<String> = vec![SUBSTATION.into()];
    let mut add_bus = |id: &str| {
        if !bus_ids.iter().any(|b| b == id) {
            bus_ids.push(id.to_string());
        }
    };
    for id in ["901", BUS_172, "903", "904", "905", "907", "908", "909", "910", BUS_1050, BUS_IPP] {
        add_bus(id);
    }
    for id in ["1", "2", "3", "6", "10", "T", "15", "16", "20", "24"] {
        add_bus(id);
    }
    let segments = params
        .pr09_segments
        .iter()
        .chain(&params.pr11_segments)
        .chain(&params.tie_segments);
    for s in segments.clone() {
        add_bus(&s.from);
        add_bus(&s.to);
    }

    let mut lines = Vec::new();
    for s in segments {
        let c = params
            .conductors
            .get(&s.conductor)
            .ok_or_else(|| GridError::invalid(format!("segment {}-{}", s.from, s.to), "unknown conductor"))?;
        lines.push(Line {
            id: format!("L{}-{}", s.from, s.to),
            from: s.from.clone(),
            to: s.to.clone(),
            r_ohm: c.r_ohm_per_km * s.length_km,
            x_ohm: c.x_ohm_per_km * s.length_km,
            length_km: Some(s.length_km),
        });
    }

    let switch = |id: &str, from: &str, to: &str, state: SwitchState, kind: SwitchKind| SwitchDevice {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        state,
        kind,
    };
    let switches = vec![
        switch(CB1, SUBSTATION, "901", SwitchState::Closed, SwitchKind::Breaker),
        switch(CB2, SUBSTATION, "1", SwitchState::Closed, SwitchKind::Breaker),
        switch(SW1, "909", "910", SwitchState::Closed, SwitchKind::Switch),
        switch(SW2, "T", BUS_1050, SwitchState::Open, SwitchKind::Switch),
    ];

    let delays = assign_cascade_delays(2, params.t1_ps_side_s, params.t1_increment_s).map_err(|e| GridError::invalid("delays", e))?;
    let svr = |id: &str, src: &str, load: &str, ctl: SvrControllerParams| SvrDevice {
        id: id.into(),
        source_bus: src.into(),
        load_bus: load.into(),
        tap: 0,
        step_size_pu: DEFAULT_TAP_STEP_PU,
        controller: ctl,
        in_service: true,
    };
    let svrs = vec![
        svr(SVR_A, "903", "904", params.controller(&params.pr09_svr, delays[0])),
        svr(SVR_B, "907", "908", params.controller(&params.pr09_svr, delays[1])),
        svr(SVR_2_3, "2", "3", params.controller(&params.svr_2_3, delays[0])),
        svr(SVR_15_16, "15", "16", params.controller(&params.svr_15_16, delays[1])),
    ];

    let mut loads = Vec::new();
    for (feeder, profile, shares) in [
        ("PR09", PROFILE_PR09, &params.pr09_loads),
        ("PR11", PROFILE_PR11, &params.pr11_loads),
    ] {
        for s in shares {
            loads.push(LoadPoint {
                id: format!("{feeder}@{}", s.bus),
                bus: s.bus.clone(),
                demand: Demand::Profile {
                    profile: profile.into(),
                    scale: s.share,
                    power_factor: params.load_power_factor,
                },
            });
        }
    }
    loads.push(LoadPoint {
        id: "industry".into(),
        bus: BUS_IPP.into(),
        demand: Demand::Fixed {
            p_mw: params.industry_p_mw,
            q_mvar: params.industry_q_mvar,
        },
    });

    let net = Network {
        base_mva: params.base_mva,
        buses: bus_ids
            .into_iter()
            .map(|id| Bus { id, nominal_kv: kv })
            .collect(),
        lines,
        switches,
        sources: vec![GridSource {
            id: "PS".into(),
            bus: SUBSTATION.into(),
            v_setpoint_pu: params.v_source_pu,
            z1_ohm: params.z1_ohm,
            z0_ohm: Some(params.z0_ohm),
        }],
        loads,
        generators: vec![crate::grid::Generator {
            id: DG.into(),
            bus: BUS_IPP.into(),
            local_supply_mw: params.industry_p_mw,
            export: Dispatch::Constant(params.contract_export_mw),
            q_mvar: params.dg_q_mvar,
            rating_mva: params.dg_rating_mva,
        }],
        svrs,
    };
    net.validate()?;
    Ok(net)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioPreset {
    /// Both feeders on their own breakers, tie open.
    Independent,
    /// PR-09 carries both feeders.
    FullToPR09,
    /// PR-11 carries both feeders.
    FullToPR11,
    /// PR-09 far section moved to PR-11.
    PartialTransfer,
}

impl ScenarioPreset {
    pub const ALL: [ScenarioPreset; 4] = [
        ScenarioPreset::Independent,
        ScenarioPreset::FullToPR09,
        ScenarioPreset::FullToPR11,
        ScenarioPreset::PartialTransfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioPreset::Independent => "Independent",
            ScenarioPreset::FullToPR09 => "FullToPR09",
            ScenarioPreset::FullToPR11 => "FullToPR11",
            ScenarioPreset::PartialTransfer => "PartialTransfer",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, GridError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| GridError::invalid("preset", format!("unknown preset `{name}`")))
    }

    /// `[CB1, CB2, SW1, SW2]`, 1 = closed.
    pub fn bits(self) -> [u8; 4] {
        match self {
            ScenarioPreset::Independent => [1, 1, 1, 0],
            ScenarioPreset::FullToPR09 => [1, 0, 1, 1],
            ScenarioPreset::FullToPR11 => [0, 1, 1, 1],
            ScenarioPreset::PartialTransfer => [1, 1, 0, 1],
        }
    }

    /// The configuration reached when `device` is the element taken out.
    pub fn with_open(device: &str) -> Result<Self, GridError> {
        match device {
            CB1 => Ok(ScenarioPreset::FullToPR11),
            CB2 => Ok(ScenarioPreset::FullToPR09),
            SW1 => Ok(ScenarioPreset::PartialTransfer),
            SW2 => Ok(ScenarioPreset::Independent),
            other => Err(GridError::UnknownDevice(other.to_string())),
        }
    }
}

pub fn preset(name: ScenarioPreset) -> SwitchStates {
    let mut s = SwitchStates::default();
    for (id, bit) in [CB1, CB2, SW1, SW2].into_iter().zip(name.bits()) {
        s.set(id, SwitchState::from_bit(bit).expect("bit"));
    }
    s
}

pub fn preset_by_name(name: &str) -> Result<SwitchStates, GridError> {
    ScenarioPreset::from_name(name).map(preset)
}

fn check_device(device: &str) -> Result<(), GridError> {
    if [CB1, CB2, SW1, SW2].contains(&device) {
        Ok(())
    } else {
        Err(GridError::UnknownDevice(device.to_string()))
    }
}

/// Opening of `device` at `t_s`.
pub fn trip_event(device: &str, t_s: f64) -> Result<ScenarioEvent, GridError> {
    check_device(device)?;
    Ok(ScenarioEvent {
        time_s: t_s,
        device: device.to_string(),
        new_state: SwitchState::Open,
    })
}

/// Trip of `device` followed, in the same step, by the switching that
/// restores supply: the result is the preset in which `device` is open.
pub fn reconfiguration_events(from: ScenarioPreset, device: &str, t_s: f64) -> Result<Vec<ScenarioEvent>, GridError> {
    let mut events = vec![trip_event(device, t_s)?];
    let target = ScenarioPreset::with_open(device)?;
    for ((id, a), b) in [CB1, CB2, SW1, SW2].into_iter().zip(from.bits()).zip(target.bits()) {
        if id != device && a != b {
            events.push(ScenarioEvent {
                time_s: t_s,
                device: id.to_string(),
                new_state: SwitchState::from_bit(b).expect("bit"),
            });
        }
    }
    Ok(events)
}

/// Applies `preset` to a copy of the network.
pub fn with_preset(net: &Network, p: ScenarioPreset) -> Result<Network, GridError> {
    let mut n = net.clone();
    n.apply_switch_states(&preset(p))?;
    Ok(n)
}

/// Sets every regulator's control mode.
pub fn with_mode(net: &Network, mode: ControlMode) -> Network {
    let mut n = net.clone();
    for s in &mut n.svrs {
        s.controller.mode = mode;
    }
    n
}

/// Load downstream of SVR 2/3 in the PartialTransfer configuration, sampled
/// from the built-in profiles: the PR-11 loads past bus 3 plus the PR-09 far
/// section beyond SW1.
pub fn partial_transfer_forecast(params: &CaseParams) -> Result<Forecast, ProfileError> {
    let pr09 = params.daily_profile(params.pr09_demand_mw)?;
    let pr11 = params.daily_profile(params.pr11_demand_mw)?;
    let pr09_far = ["910", BUS_1050, BUS_IPP];
    let pr11_upstream = ["1", "2"];
    let k09: f64 = params
        .pr09_loads
        .iter()
        .filter(|s| pr09_far.contains(&s.bus.as_str()))
        .map(|s| s.share)
        .sum();
    let k11: f64 = params
        .pr11_loads
        .iter()
        .filter(|s| !pr11_upstream.contains(&s.bus.as_str()))
        .map(|s| s.share)
        .sum();
    let mut times: Vec<f64> = pr09
        .curve()
        .points()
        .iter()
        .chain(pr11.curve().points())
        .map(|p| p.0)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    Forecast::new(
        times
            .into_iter()
            .map(|t| (t, k09 * pr09.curve().eval(t) + k11 * pr11.curve().eval(t)))
            .collect(),
    )
}

/// Returns `net` with the taps its controllers settle to when loads and
/// dispatch are held at their values at `at_s` for `duration_s`.
pub fn settle_taps(
    net: &Network,
    profiles: &ProfileSet,
    at_s: f64,
    duration_s: f64,
    cfg: &SimulationConfig,
) -> Result<Network, EngineError> {
    let frozen: ProfileSet = profiles
        .iter()
        .map(|(k, p)| (k.clone(), LoadProfile::constant(p.curve().eval(at_s), duration_s)))
        .collect();
    let mut n = net.clone();
    for g in &mut n.generators {
        g.export = Dispatch::Constant(g.export.export_mw(at_s));
    }
    let cfg = SimulationConfig {
        duration_s,
        ..cfg.clone()
    };
    let out = run(&n, &frozen, &[], &cfg)?;
    let mut settled = net.clone();
    for c in &out.commands {
        if let Some(s) = settled.svr_mut(&c.svr) {
            s.tap += c.delta;
        }
    }
    Ok(settled)
}

/// Generator penetration as export over instantaneous feeder demand, in percent.
pub fn penetration_pct(export_mw: f64, feeder_demand_mw: f64) -> Option<f64> {
    (feeder_demand_mw > 0.0).then(|| 100.0 * export_mw / feeder_demand_mw)
}
