//! Regulator control: regulation-point selection, the deadband/hysteresis
//! measuring element, the double-time-delay tap timer, cascade delay
//! coordination and after-the-fact runaway detection.

use serde::{Deserialize, Serialize};

use crate::grid::{DEFAULT_TAP_STEP_PU, TAP_MAX, TAP_MIN};
use crate::powerflow::FlowDirection;

/// Float slack on timer comparisons so that `k * dt` sums hit their delay.
const TIMER_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    /// Regulation point follows the active power direction.
    Bidirectional,
    /// Regulation point fixed at the load terminal.
    Cogeneration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrControllerParams {
    pub v_ref_pu: f64,
    /// Total band width centred on `v_ref_pu`.
    pub deadband_pu: f64,
    #[serde(default)]
    pub hysteresis_pu: f64,
    /// First-tap delay.
    pub t1_s: f64,
    /// Subsequent-tap delay.
    pub t2_s: f64,
    pub mode: ControlMode,
}

impl SvrControllerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_ref_pu > 0.0) {
            return Err("v_ref_pu must be positive".into());
        }
        if !(self.deadband_pu > 0.0) {
            return Err("deadband_pu must be positive".into());
        }
        if !(self.hysteresis_pu >= 0.0 && self.hysteresis_pu < self.deadband_pu / 2.0) {
            return Err("hysteresis_pu must lie in [0, deadband/2)".into());
        }
        if !(self.t2_s > 0.0 && self.t1_s >= self.t2_s) {
            return Err("delays must satisfy t1_s >= t2_s > 0".into());
        }
        Ok(())
    }

    pub fn half_band(&self) -> f64 {
        self.deadband_pu / 2.0
    }

    /// Measuring element. Once an episode is in progress the release
    /// threshold shrinks by the hysteresis band.
    pub fn is_violation(&self, v_reg_pu: f64, correcting: bool) -> bool {
        let err = (v_reg_pu - self.v_ref_pu).abs();
        if correcting {
            err > self.half_band() - self.hysteresis_pu
        } else {
            err > self.half_band()
        }
    }

    pub fn in_band(&self, v_reg_pu: f64) -> bool {
        !self.is_violation(v_reg_pu, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegulationSide {
    SourceTerminal,
    LoadTerminal,
}

impl RegulationSide {
    pub fn opposite(self) -> Self {
        match self {
            RegulationSide::SourceTerminal => RegulationSide::LoadTerminal,
            RegulationSide::LoadTerminal => RegulationSide::SourceTerminal,
        }
    }
}

pub fn regulation_side(mode: ControlMode, direction: FlowDirection) -> RegulationSide {
    match (mode, direction) {
        (ControlMode::Bidirectional, FlowDirection::Reverse) => RegulationSide::SourceTerminal,
        _ => RegulationSide::LoadTerminal,
    }
}

/// Sign the controller assumes for d(V_regulated)/d(tap). The internal model
/// is `V_load = ratio * V_source`, so raising the tap raises the load terminal
/// and, seen from the load terminal, lowers the source terminal.
pub fn assumed_gain_sign(side: RegulationSide) -> i32 {
    match side {
        RegulationSide::LoadTerminal => 1,
        RegulationSide::SourceTerminal => -1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    First,
    Subsequent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrControllerState {
    pub timer_s: f64,
    pub stage: Stage,
    pub correcting: bool,
    pub at_limit_since: Option<f64>,
}

impl Default for SvrControllerState {
    fn default() -> Self {
        SvrControllerState {
            timer_s: 0.0,
            stage: Stage::First,
            correcting: false,
            at_limit_since: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TapCommand {
    pub svr: String,
    /// `+1` or `-1`.
    pub delta: i32,
    pub issued_at_s: f64,
}

/// Advances one controller by `dt_s`.
///
/// The violation onset arms the timer at zero; every further violating step
/// adds `dt_s`. The first command fires once the timer reaches `t1_s`, later
/// ones every `t2_s`. A command that would leave `[-16, 16]` is withheld and
/// `at_limit_since` records when the limit was first hit.
pub fn controller_step(
    state: SvrControllerState,
    params: &SvrControllerParams,
    v_reg_pu: f64,
    side: RegulationSide,
    tap: i32,
    dt_s: f64,
    now_s: f64,
) -> (SvrControllerState, Option<i32>) {
    debug_assert!(dt_s > 0.0);
    if !params.is_violation(v_reg_pu, state.correcting) {
        return (SvrControllerState::default(), None);
    }
    let mut next = state;
    if !state.correcting {
        next.correcting = true;
        next.stage = Stage::First;
        next.timer_s = 0.0;
        return (next, None);
    }
    next.timer_s += dt_s;
    let delay = match next.stage {
        Stage::First => params.t1_s,
        Stage::Subsequent => params.t2_s,
    };
    if next.timer_s + TIMER_EPS < delay {
        return (next, None);
    }

    let err = v_reg_pu - params.v_ref_pu;
    let delta = -(err.signum() as i32) * assumed_gain_sign(side);
    next.timer_s = 0.0;
    next.stage = Stage::Subsequent;
    let target = tap + delta;
    if !(TAP_MIN..=TAP_MAX).contains(&target) {
        next.at_limit_since.get_or_insert(now_s);
        return (next, None);
    }
    next.at_limit_since = None;
    (next, Some(delta))
}

/// First-tap delays for main-branch regulators ordered from the substation
/// outward: `t1[i] = base + i * increment`.
pub fn assign_cascade_delays(count: usize, t1_base_s: f64, increment_s: f64) -> Result<Vec<f64>, String> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if !(t1_base_s > 0.0 && increment_s > 0.0) {
        return Err("base and increment must be positive".into());
    }
    Ok((0..count).map(|i| t1_base_s + i as f64 * increment_s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunawayClass {
    TapLimitOvervoltage,
    TapLimitUndervoltage,
    IneffectiveRegulation,
}

impl RunawayClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RunawayClass::TapLimitOvervoltage => "tap_limit_overvoltage",
            RunawayClass::TapLimitUndervoltage => "tap_limit_undervoltage",
            RunawayClass::IneffectiveRegulation => "ineffective_regulation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunawayEvent {
    pub svr: String,
    pub start_s: f64,
    pub end_s: f64,
    pub terminal_regulated: RegulationSide,
    pub final_tap: i32,
    pub classification: RunawayClass,
}

/// One recorded step of a regulator, as seen by the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrSample {
    pub time_s: f64,
    /// Tap in effect for this step's solution.
    pub tap: i32,
    pub side: RegulationSide,
    pub v_reg_pu: f64,
    pub v_opposite_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunawayCriteria {
    /// Minimum time at a tap limit with the violation still present.
    pub window_s: f64,
    /// A tap is ineffective when it moves the regulated voltage by less than
    /// this fraction of `step_pu`.
    pub ineffective_fraction: f64,
    pub ineffective_count: usize,
    pub step_pu: f64,
}

impl Default for RunawayCriteria {
    fn default() -> Self {
        RunawayCriteria {
            window_s: 10.0,
            ineffective_fraction: 0.2,
            ineffective_count: 3,
            step_pu: DEFAULT_TAP_STEP_PU,
        }
    }
}

pub fn detect_runaway(
    svr: &str,
    samples: &[SvrSample],
    params: &SvrControllerParams,
    criteria: &RunawayCriteria,
) -> Vec<RunawayEvent> {
    let mut events = Vec::new();

    // Replay the measuring element so hysteresis matches the controller.
    let mut correcting = false;
    let violating: Vec<bool> = samples
        .iter()
        .map(|s| {
            correcting = params.is_violation(s.v_reg_pu, correcting);
            correcting
        })
        .collect();

    // Tap pinned at a limit while the violation persists.
    let mut i = 0;
    while i < samples.len() {
        let at_limit = |k: usize| samples[k].tap == TAP_MAX || samples[k].tap == TAP_MIN;
        if !(violating[i] && at_limit(i)) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < samples.len() && violating[i + 1] && at_limit(i + 1) && samples[i + 1].tap == samples[start].tap {
            i += 1;
        }
        let last = &samples[i];
        if last.time_s - samples[start].time_s >= criteria.window_s {
            let classification = if last.v_opposite_pu >= params.v_ref_pu {
                RunawayClass::TapLimitOvervoltage
            } else {
                RunawayClass::TapLimitUndervoltage
            };
            events.push(RunawayEvent {
                svr: svr.to_string(),
                start_s: samples[start].time_s,
                end_s: last.time_s,
                terminal_regulated: last.side,
                final_tap: last.tap,
                classification,
            });
        }
        i += 1;
    }

    // Consecutive taps that barely move the regulated voltage.
    let threshold = criteria.ineffective_fraction * criteria.step_pu;
    let mut run = 0usize;
    let mut run_start = 0.0;
    let mut reported = false;
    for k in 1..samples.len() {
        if !violating[k] {
            run = 0;
            reported = false;
            continue;
        }
        if samples[k].tap == samples[k - 1].tap {
            continue;
        }
        let same_side = samples[k].side == samples[k - 1].side;
        let dv = (samples[k].v_reg_pu - samples[k - 1].v_reg_pu).abs();
        if same_side && violating[k - 1] && dv < threshold {
            if run == 0 {
                run_start = samples[k].time_s;
            }
            run += 1;
        } else {
            run = 0;
        }
        if run >= criteria.ineffective_count && !reported {
            reported = true;
            let mut end = k;
            while end + 1 < samples.len() && violating[end + 1] {
                end += 1;
            }
            events.push(RunawayEvent {
                svr: svr.to_string(),
                start_s: run_start,
                end_s: samples[end].time_s,
                terminal_regulated: samples[k].side,
                final_tap: samples[end].tap,
                classification: RunawayClass::IneffectiveRegulation,
            });
        }
    }

    events.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    events
}
