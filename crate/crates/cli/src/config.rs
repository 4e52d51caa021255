//! Run configuration: a TOML document with SI-unit network data.
//!
//! ```toml
//! out = "runs/day"
//!
//! [network]
//! builtin = "twin-feeders"   # or: file = "feeder.toml"
//! study = "default"          # default | partial-transfer | predispatch
//! preset = "Independent"
//!
//! [case]                     # any CaseParams field, builtin network only
//! load_power_factor = 0.97
//!
//! [simulation]
//! dt_s = 1.0
//! duration_s = 86400.0
//! settle_s = 1800.0
//!
//! trips = ["CB1@20"]
//!
//! [[events]]
//! time_s = 600.0
//! device = "SW2"
//! new_state = "closed"
//!
//! [dispatch]
//! constant_mw = 3.0          # or: schedule = "schedule.csv"
//!
//! [[svr]]
//! id = "SVR_A"
//! mode = "bidirectional"
//!
//! [profiles]
//! pr09 = "pr09.csv"
//!
//! [record]
//! buses = ["1050", "IPP"]
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use svrqsts::control::ControlMode;
use svrqsts::engine::{RecordSelection, ScenarioEvent, SimulationConfig, VoltageBand};
use svrqsts::grid::{Dispatch, Network, SwitchState};
use svrqsts::predispatch::{DispatchSchedule, PredispatchParams};
use svrqsts::profile::{LoadProfile, ProfileSet};
use svrqsts::scenarios::{self, CaseParams, ScenarioPreset};

use crate::files::read_two_columns;

pub const BUILTIN_CASE: &str = "twin-feeders";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub network: NetworkSection,
    pub case: Option<CaseParams>,
    #[serde(default)]
    pub simulation: SimulationSection,
    /// `DEVICE@SECONDS`; on the builtin case a trip also performs the
    /// transfer switching of the preset in which that device is open.
    #[serde(default)]
    pub trips: Vec<String>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    pub dispatch: Option<DispatchSection>,
    #[serde(default)]
    pub svr: Vec<SvrOverride>,
    #[serde(default)]
    pub profiles: BTreeMap<String, PathBuf>,
    pub record: Option<RecordSelection>,
    pub band: Option<VoltageBand>,
    #[serde(default)]
    pub predispatch: PredispatchSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub builtin: Option<String>,
    pub file: Option<PathBuf>,
    pub study: Option<String>,
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub dt_s: f64,
    pub duration_s: f64,
    /// Length of the frozen-load run that pre-settles taps; 0 keeps the given taps.
    pub settle_s: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            dt_s: 1.0,
            duration_s: 86_400.0,
            settle_s: 1800.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchSection {
    pub generator: Option<String>,
    pub constant_mw: Option<f64>,
    pub schedule: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrOverride {
    pub id: String,
    pub v_ref_pu: Option<f64>,
    pub deadband_pu: Option<f64>,
    pub hysteresis_pu: Option<f64>,
    pub t1_s: Option<f64>,
    pub t2_s: Option<f64>,
    pub mode: Option<ControlMode>,
    pub tap: Option<i32>,
    pub in_service: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredispatchSection {
    pub contract_avg_mw: Option<f64>,
    pub margin: Option<f64>,
    pub ramp_limit_mw_per_min: Option<f64>,
    pub p_min_mw: Option<f64>,
    pub p_max_mw: Option<f64>,
    pub grid_step_s: Option<f64>,
}

impl PredispatchSection {
    pub fn apply(&self, p: &mut PredispatchParams) {
        let set = |dst: &mut f64, src: Option<f64>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut p.contract_avg_mw, self.contract_avg_mw);
        set(&mut p.margin, self.margin);
        set(&mut p.ramp_limit_mw_per_min, self.ramp_limit_mw_per_min);
        set(&mut p.p_min_mw, self.p_min_mw);
        set(&mut p.p_max_mw, self.p_max_mw);
        set(&mut p.grid_step_s, self.grid_step_s);
    }
}

/// Dispatch given on the command line: a constant or a schedule file.
#[derive(Debug, Clone, PartialEq)]
pub enum DispatchArg {
    Constant(f64),
    File(PathBuf),
}

impl DispatchArg {
    pub fn parse(s: &str) -> Self {
        match s.parse::<f64>() {
            Ok(v) => DispatchArg::Constant(v),
            Err(_) => DispatchArg::File(PathBuf::from(s)),
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub duration_s: Option<f64>,
    pub dt_s: Option<f64>,
    pub trips: Vec<String>,
    pub dispatch: Option<DispatchArg>,
    pub out: Option<PathBuf>,
}

/// Everything the engine needs for one run.
#[derive(Debug, Clone)]
pub struct Study {
    pub net: Network,
    pub profiles: ProfileSet,
    pub events: Vec<ScenarioEvent>,
    pub cfg: SimulationConfig,
    pub settle_s: f64,
    pub case: Option<CaseParams>,
}

fn cwd_relative(p: &Path) -> PathBuf {
    std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
}

pub fn parse_trip(s: &str) -> Result<(String, f64)> {
    let (dev, t) = s
        .split_once('@')
        .ok_or_else(|| anyhow!("trip `{s}` is not DEVICE@SECONDS"))?;
    let t: f64 = t.trim().parse().with_context(|| format!("trip `{s}`: bad time"))?;
    if dev.trim().is_empty() {
        bail!("trip `{s}`: empty device");
    }
    Ok((dev.trim().to_string(), t))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.preset {
            self.network.preset = Some(p.clone());
        }
        if let Some(d) = o.duration_s {
            self.simulation.duration_s = d;
        }
        if let Some(d) = o.dt_s {
            self.simulation.dt_s = d;
        }
        self.trips.extend(o.trips.iter().cloned());
        match &o.dispatch {
            // Flag paths are relative to the working directory, not the config.
            Some(DispatchArg::Constant(v)) => {
                let gen = self.dispatch.as_ref().and_then(|d| d.generator.clone());
                self.dispatch = Some(DispatchSection {
                    generator: gen,
                    constant_mw: Some(*v),
                    schedule: None,
                });
            }
            Some(DispatchArg::File(f)) => {
                let gen = self.dispatch.as_ref().and_then(|d| d.generator.clone());
                self.dispatch = Some(DispatchSection {
                    generator: gen,
                    constant_mw: None,
                    schedule: Some(cwd_relative(f)),
                });
            }
            None => {}
        }
        if let Some(out) = &o.out {
            self.out = Some(cwd_relative(out));
        }
    }

    /// Builtin case parameters after the study modifier, if the network is builtin.
    pub fn case_params(&self) -> Result<Option<CaseParams>> {
        if self.network.file.is_some() {
            if self.network.builtin.is_some() {
                bail!("network: give either `builtin` or `file`, not both");
            }
            if self.case.is_some() {
                bail!("[case] only applies to the builtin network");
            }
            return Ok(None);
        }
        let name = self.network.builtin.as_deref().unwrap_or(BUILTIN_CASE);
        if name != BUILTIN_CASE {
            bail!("unknown builtin network `{name}` (known: {BUILTIN_CASE})");
        }
        let p = self.case.clone().unwrap_or_default();
        Ok(Some(match self.network.study.as_deref().unwrap_or("default") {
            "default" => p,
            "partial-transfer" => p.partial_transfer_settings(),
            "predispatch" => p.predispatch_study(),
            other => bail!("unknown study `{other}` (known: default, partial-transfer, predispatch)"),
        }))
    }

    pub fn preset(&self) -> Result<Option<ScenarioPreset>> {
        self.network
            .preset
            .as_deref()
            .map(ScenarioPreset::from_name)
            .transpose()
            .map_err(|e| anyhow!(e))
    }

    pub fn build(&self) -> Result<Study> {
        let case = self.case_params()?;
        let preset = self.preset()?;
        let (mut net, mut profiles) = match (&case, &self.network.file) {
            (Some(p), _) => (
                scenarios::build_case_feeders(p).context("building the builtin case")?,
                p.profiles().context("builtin profiles")?,
            ),
            (None, Some(f)) => {
                let path = self.resolve(f);
                let text = fs::read_to_string(&path).with_context(|| format!("cannot read network {}", path.display()))?;
                let net: Network = toml::from_str(&text).with_context(|| format!("cannot parse network {}", path.display()))?;
                net.validate().with_context(|| format!("invalid network {}", path.display()))?;
                (net, ProfileSet::new())
            }
            (None, None) => unreachable!("case_params returns a case when no file is given"),
        };
        if let Some(p) = preset {
            net = scenarios::with_preset(&net, p).context("applying preset")?;
        }

        for (name, file) in &self.profiles {
            let pts = read_two_columns(&self.resolve(file))?;
            let prof = LoadProfile::new(pts).with_context(|| format!("profile `{name}`"))?;
            profiles.insert(name.clone(), prof);
        }

        for o in &self.svr {
            let s = net.svr_mut(&o.id).ok_or_else(|| anyhow!("[[svr]]: unknown regulator `{}`", o.id))?;
            let c = &mut s.controller;
            c.v_ref_pu = o.v_ref_pu.unwrap_or(c.v_ref_pu);
            c.deadband_pu = o.deadband_pu.unwrap_or(c.deadband_pu);
            c.hysteresis_pu = o.hysteresis_pu.unwrap_or(c.hysteresis_pu);
            c.t1_s = o.t1_s.unwrap_or(c.t1_s);
            c.t2_s = o.t2_s.unwrap_or(c.t2_s);
            c.mode = o.mode.unwrap_or(c.mode);
            s.tap = o.tap.unwrap_or(s.tap);
            s.in_service = o.in_service.unwrap_or(s.in_service);
        }
        net.validate().context("network after overrides")?;

        if let Some(d) = &self.dispatch {
            let export = match (d.constant_mw, &d.schedule) {
                (Some(v), None) => Dispatch::Constant(v),
                (None, Some(f)) => Dispatch::Schedule(
                    DispatchSchedule::new(read_two_columns(&self.resolve(f))?)
                        .with_context(|| format!("schedule {}", f.display()))?,
                ),
                _ => bail!("[dispatch]: give exactly one of `constant_mw` or `schedule`"),
            };
            let id = pick_generator(&net, d.generator.as_deref())?;
            net.generators.iter_mut().find(|g| g.id == id).unwrap().export = export;
        }

        let mut events = self.events.clone();
        let from = preset.or(case.as_ref().map(|_| ScenarioPreset::Independent));
        for t in &self.trips {
            let (dev, at) = parse_trip(t)?;
            if net.switch(&dev).is_none() {
                bail!("trip `{t}`: unknown device `{dev}`");
            }
            match from {
                Some(p) if case.is_some() => {
                    events.extend(scenarios::reconfiguration_events(p, &dev, at).map_err(|e| anyhow!("trip `{t}`: {e}"))?)
                }
                _ => events.push(ScenarioEvent {
                    time_s: at,
                    device: dev,
                    new_state: SwitchState::Open,
                }),
            }
        }

        let record = self.record.clone().unwrap_or_else(|| RecordSelection {
            buses: net.buses.iter().map(|b| b.id.clone()).collect(),
            branches: Vec::new(),
        });
        let cfg = SimulationConfig {
            dt_s: self.simulation.dt_s,
            duration_s: self.simulation.duration_s,
            record,
            band: self.band.unwrap_or_default(),
            ..Default::default()
        };
        if !(self.simulation.settle_s >= 0.0) {
            bail!("settle_s must be non-negative");
        }
        Ok(Study {
            net,
            profiles,
            events,
            cfg,
            settle_s: self.simulation.settle_s,
            case,
        })
    }
}

/// The named generator, or the only one in the network.
pub fn pick_generator(net: &Network, id: Option<&str>) -> Result<String> {
    match id {
        Some(id) if net.generators.iter().any(|g| g.id == id) => Ok(id.to_string()),
        Some(id) => bail!("unknown generator `{id}`"),
        None => match net.generators.as_slice() {
            [g] => Ok(g.id.clone()),
            [] => bail!("network has no generator to dispatch"),
            _ => bail!("network has several generators; set dispatch.generator"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trips_parse() {
        assert_eq!(parse_trip("CB1@20").unwrap(), ("CB1".to_string(), 20.0));
        assert_eq!(parse_trip(" SW7 @ 43200.5").unwrap(), ("SW7".to_string(), 43200.5));
        assert!(parse_trip("CB1").is_err());
        assert!(parse_trip("@5").is_err());
        assert!(parse_trip("CB1@soon").is_err());
    }

    #[test]
    fn dispatch_flag_is_number_or_path() {
        assert!(matches!(DispatchArg::parse("2.5"), DispatchArg::Constant(v) if v == 2.5));
        assert!(matches!(DispatchArg::parse("0"), DispatchArg::Constant(v) if v == 0.0));
        assert!(matches!(DispatchArg::parse("pd/schedule.csv"), DispatchArg::File(p) if p == Path::new("pd/schedule.csv")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[simulation]\ndt_s = 2.0\n").is_ok());
        assert!(toml::from_str::<RunConfig>("[simulation]\ndt = 2.0\n").is_err());
    }
}
