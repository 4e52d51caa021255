//! Network data model: buses, branches, injections and regulators, plus the
//! per-unit and tap arithmetic shared by the solver and the controllers.
//!
//! Everything here is expressed in engineering units (kV, Ω, MW, MVar). The
//! solver converts to per-unit on the network's system base.

use std::collections::{BTreeMap, HashSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::SvrControllerParams;
use crate::error::GridError;
use crate::predispatch::DispatchSchedule;

pub const TAP_MIN: i32 = -16;
pub const TAP_MAX: i32 = 16;
/// 0.625 % per step: ±10 % over 16 raise and 16 lower positions.
pub const DEFAULT_TAP_STEP_PU: f64 = 0.00625;
pub const DEFAULT_BASE_MVA: f64 = 10.0;

/// Ratio of the ideal regulator, `V_load = ratio * V_source`.
pub fn tap_ratio(tap: i32) -> Result<f64, GridError> {
    tap_ratio_with_step(tap, DEFAULT_TAP_STEP_PU)
}

pub fn tap_ratio_with_step(tap: i32, step_pu: f64) -> Result<f64, GridError> {
    if !(TAP_MIN..=TAP_MAX).contains(&tap) {
        return Err(GridError::TapOutOfRange(tap));
    }
    Ok(1.0 + tap as f64 * step_pu)
}

pub fn z_base_ohm(v_base_kv: f64, s_base_mva: f64) -> Result<f64, GridError> {
    if !(v_base_kv > 0.0 && s_base_mva > 0.0) {
        return Err(GridError::InvalidBase {
            v_base_kv,
            s_base_mva,
        });
    }
    Ok(v_base_kv * v_base_kv / s_base_mva)
}

/// `z_pu = z_ohm * S_base / V_base²` with line-to-line kV and three-phase MVA.
pub fn to_per_unit(z_ohm: Complex64, v_base_kv: f64, s_base_mva: f64) -> Result<Complex64, GridError> {
    Ok(z_ohm / z_base_ohm(v_base_kv, s_base_mva)?)
}

pub fn from_per_unit(z_pu: Complex64, v_base_kv: f64, s_base_mva: f64) -> Result<Complex64, GridError> {
    Ok(z_pu * z_base_ohm(v_base_kv, s_base_mva)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Line-to-line kV.
    pub nominal_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_km: Option<f64>,
}

impl Line {
    pub fn z_ohm(&self) -> Complex64 {
        Complex64::new(self.r_ohm, self.x_ohm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchState {
    Open,
    Closed,
}

impl SwitchState {
    pub fn is_closed(self) -> bool {
        self == SwitchState::Closed
    }

    /// `0` = open, `1` = closed.
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(SwitchState::Open),
            1 => Some(SwitchState::Closed),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            SwitchState::Open => 0,
            SwitchState::Closed => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchKind {
    Breaker,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchDevice {
    pub id: String,
    pub from: String,
    pub to: String,
    pub state: SwitchState,
    pub kind: SwitchKind,
}

fn default_setpoint() -> f64 {
    1.0
}

/// Substation equivalent: an ideal voltage behind the positive-sequence
/// Thévenin impedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSource {
    pub id: String,
    pub bus: String,
    #[serde(default = "default_setpoint")]
    pub v_setpoint_pu: f64,
    /// Positive-sequence impedance, `[re, im]` in Ω.
    pub z1_ohm: Complex64,
    /// Zero-sequence impedance. Carried for completeness; balanced studies never read it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0_ohm: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Demand {
    /// Constant MW/MVar.
    Fixed { p_mw: f64, q_mvar: f64 },
    /// `scale * profile(t)` MW with Q from a constant lagging power factor.
    Profile {
        profile: String,
        scale: f64,
        power_factor: f64,
    },
    /// Separate P and Q profiles, both multiplied by `scale`.
    ProfileQ {
        profile: String,
        q_profile: String,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub id: String,
    pub bus: String,
    pub demand: Demand,
}

/// Active power the generator exports on top of its on-site supply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispatch {
    Constant(f64),
    Schedule(DispatchSchedule),
}

impl Dispatch {
    pub fn export_mw(&self, t_s: f64) -> f64 {
        match self {
            Dispatch::Constant(p) => *p,
            Dispatch::Schedule(s) => s.value_at(t_s),
        }
    }
}

/// Constant-power generator. Injects `local_supply_mw + export(t)` MW and
/// `q_mvar` MVar at its bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub bus: String,
    #[serde(default)]
    pub local_supply_mw: f64,
    pub export: Dispatch,
    #[serde(default)]
    pub q_mvar: f64,
    pub rating_mva: f64,
}

impl Generator {
    pub fn p_mw(&self, t_s: f64) -> f64 {
        self.local_supply_mw + self.export.export_mw(t_s)
    }
}

fn default_step() -> f64 {
    DEFAULT_TAP_STEP_PU
}

/// Aggregate step voltage regulator modeled as an ideal tap-ratio branch
/// from `source_bus` to `load_bus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrDevice {
    pub id: String,
    pub source_bus: String,
    pub load_bus: String,
    #[serde(default)]
    pub tap: i32,
    #[serde(default = "default_step")]
    pub step_size_pu: f64,
    pub controller: SvrControllerParams,
    /// Out of service means bypassed: ratio 1 and an idle controller.
    #[serde(default = "default_true")]
    pub in_service: bool,
}

fn default_true() -> bool {
    true
}

impl SvrDevice {
    pub fn ratio(&self, tap: i32) -> Result<f64, GridError> {
        tap_ratio_with_step(tap, self.step_size_pu)
    }
}

/// Open/closed state of every switching device, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchStates(pub BTreeMap<String, SwitchState>);

impl SwitchStates {
    pub fn get(&self, id: &str) -> Option<SwitchState> {
        self.0.get(id).copied()
    }

    pub fn set(&mut self, id: impl Into<String>, state: SwitchState) {
        self.0.insert(id.into(), state);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, SwitchState)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

fn default_base() -> f64 {
    DEFAULT_BASE_MVA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub switches: Vec<SwitchDevice>,
    pub sources: Vec<GridSource>,
    #[serde(default)]
    pub loads: Vec<LoadPoint>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub svrs: Vec<SvrDevice>,
}

impl Network {
    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn svr(&self, id: &str) -> Option<&SvrDevice> {
        self.svrs.iter().find(|s| s.id == id)
    }

    pub fn svr_mut(&mut self, id: &str) -> Option<&mut SvrDevice> {
        self.svrs.iter_mut().find(|s| s.id == id)
    }

    pub fn switch(&self, id: &str) -> Option<&SwitchDevice> {
        self.switches.iter().find(|s| s.id == id)
    }

    /// Switch states as stored in the description.
    pub fn switch_states(&self) -> SwitchStates {
        SwitchStates(
            self.switches
                .iter()
                .map(|s| (s.id.clone(), s.state))
                .collect(),
        )
    }

    pub fn apply_switch_states(&mut self, states: &SwitchStates) -> Result<(), GridError> {
        for (id, state) in states.iter() {
            let sw = self
                .switches
                .iter_mut()
                .find(|s| s.id == id)
                .ok_or_else(|| GridError::UnknownSwitch(id.to_string()))?;
            sw.state = state;
        }
        Ok(())
    }

    pub fn taps(&self) -> Vec<i32> {
        self.svrs.iter().map(|s| s.tap).collect()
    }

    /// Checks ids, references and per-element invariants.
    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.base_mva > 0.0) {
            return Err(GridError::invalid("base_mva", "must be positive"));
        }
        let mut bus_ids = HashSet::new();
        for b in &self.buses {
            if !bus_ids.insert(b.id.as_str()) {
                return Err(GridError::DuplicateId(b.id.clone()));
            }
            if !(b.nominal_kv > 0.0) {
                return Err(GridError::invalid(format!("bus {}", b.id), "nominal_kv must be positive"));
            }
        }
        let has_bus = |id: &str| -> Result<(), GridError> {
            if bus_ids.contains(id) {
                Ok(())
            } else {
                Err(GridError::UnknownBus(id.to_string()))
            }
        };

        let mut branch_ids = HashSet::new();
        for l in &self.lines {
            if !branch_ids.insert(l.id.as_str()) {
                return Err(GridError::DuplicateId(l.id.clone()));
            }
            has_bus(&l.from)?;
            has_bus(&l.to)?;
            if l.from == l.to {
                return Err(GridError::invalid(format!("line {}", l.id), "from and to are the same bus"));
            }
            if !(l.r_ohm >= 0.0) || !l.x_ohm.is_finite() {
                return Err(GridError::invalid(format!("line {}", l.id), "r_ohm must be >= 0"));
            }
            if l.r_ohm == 0.0 && l.x_ohm == 0.0 {
                return Err(GridError::invalid(format!("line {}", l.id), "zero impedance; use a switch"));
            }
        }
        for s in &self.switches {
            if !branch_ids.insert(s.id.as_str()) {
                return Err(GridError::DuplicateId(s.id.clone()));
            }
            has_bus(&s.from)?;
            has_bus(&s.to)?;
            if s.from == s.to {
                return Err(GridError::invalid(format!("switch {}", s.id), "from and to are the same bus"));
            }
        }
        for r in &self.svrs {
            if !branch_ids.insert(r.id.as_str()) {
                return Err(GridError::DuplicateId(r.id.clone()));
            }
            has_bus(&r.source_bus)?;
            has_bus(&r.load_bus)?;
            if r.source_bus == r.load_bus {
                return Err(GridError::invalid(format!("svr {}", r.id), "terminals are the same bus"));
            }
            if !(r.step_size_pu > 0.0) {
                return Err(GridError::invalid(format!("svr {}", r.id), "step_size_pu must be positive"));
            }
            r.ratio(r.tap)?;
            r.controller
                .validate()
                .map_err(|e| GridError::invalid(format!("svr {}", r.id), e))?;
        }

        let mut source_buses = HashSet::new();
        for s in &self.sources {
            has_bus(&s.bus)?;
            if !source_buses.insert(s.bus.as_str()) {
                return Err(GridError::invalid(format!("source {}", s.id), "two sources on one bus"));
            }
            if s.z1_ohm.norm() <= 0.0 {
                return Err(GridError::invalid(format!("source {}", s.id), "|z1| must be positive"));
            }
            if !(s.v_setpoint_pu > 0.0) {
                return Err(GridError::invalid(format!("source {}", s.id), "v_setpoint_pu must be positive"));
            }
        }

        let mut inj_ids = HashSet::new();
        for l in &self.loads {
            if !inj_ids.insert(l.id.as_str()) {
                return Err(GridError::DuplicateId(l.id.clone()));
            }
            has_bus(&l.bus)?;
            match &l.demand {
                Demand::Profile { power_factor, .. } if !(*power_factor > 0.0 && *power_factor <= 1.0) => {
                    return Err(GridError::invalid(format!("load {}", l.id), "power factor must be in (0, 1]"));
                }
                _ => {}
            }
        }
        for g in &self.generators {
            if !inj_ids.insert(g.id.as_str()) {
                return Err(GridError::DuplicateId(g.id.clone()));
            }
            has_bus(&g.bus)?;
            if !(g.rating_mva > 0.0) {
                return Err(GridError::invalid(format!("generator {}", g.id), "rating must be positive"));
            }
            if let Dispatch::Constant(p) = g.export {
                let total = Complex64::new(g.local_supply_mw + p, g.q_mvar).norm();
                if total > g.rating_mva * (1.0 + 1e-9) {
                    return Err(GridError::invalid(format!("generator {}", g.id), "output exceeds rating"));
                }
            }
        }
        Ok(())
    }
}
