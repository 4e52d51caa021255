//! Quasi-static time-series engine.
//!
//! Each step applies due switching events, samples loads and dispatch, solves
//! the power flow with the current taps, runs every regulator controller and
//! queues its command for the next step. Runaway detection and the other
//! summaries are computed from the recorded series afterwards.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::control::{
    controller_step, detect_runaway, regulation_side, ControlMode, RegulationSide, RunawayCriteria, RunawayEvent,
    SvrControllerParams, SvrControllerState, SvrSample, TapCommand,
};
use crate::error::{EngineError, PowerFlowError, ProfileError};
use crate::grid::{Demand, Network, SwitchState};
use crate::powerflow::{classify, FlowDirection, PowerFlowSolution, RadialModel, SolverOptions};
use crate::profile::ProfileSet;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub time_s: f64,
    pub device: String,
    pub new_state: SwitchState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageBand {
    pub lo_pu: f64,
    pub hi_pu: f64,
}

impl Default for VoltageBand {
    fn default() -> Self {
        VoltageBand { lo_pu: 0.93, hi_pu: 1.05 }
    }
}

impl VoltageBand {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo_pu && v <= self.hi_pu
    }
}

/// What to record besides the regulators, whose terminals and flows are always kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordSelection {
    #[serde(default)]
    pub buses: Vec<String>,
    #[serde(default)]
    pub branches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub dt_s: f64,
    pub duration_s: f64,
    pub record: RecordSelection,
    pub solver: SolverOptions,
    pub band: VoltageBand,
    pub runaway: RunawayCriteria,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            dt_s: 1.0,
            duration_s: 86_400.0,
            record: RecordSelection::default(),
            solver: SolverOptions::default(),
            band: VoltageBand::default(),
            runaway: RunawayCriteria::default(),
        }
    }
}

impl SimulationConfig {
    pub fn with_duration(mut self, duration_s: f64) -> Self {
        self.duration_s = duration_s;
        self
    }

    /// Number of recorded rows, `duration / dt + 1`.
    pub fn steps(&self) -> Result<usize, EngineError> {
        if !(self.dt_s > 0.0) {
            return Err(EngineError::Config("dt_s must be positive".into()));
        }
        if !(self.duration_s >= 0.0) {
            return Err(EngineError::Config("duration_s must be non-negative".into()));
        }
        let n = (self.duration_s / self.dt_s).round();
        if (n * self.dt_s - self.duration_s).abs() > 1e-6 * self.dt_s {
            return Err(EngineError::Config("duration_s must be a multiple of dt_s".into()));
        }
        Ok(n as usize + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusTrace {
    pub id: String,
    pub vmag_pu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchTrace {
    pub id: String,
    pub p_mw: Vec<f64>,
    pub q_mvar: Vec<f64>,
    pub direction: Vec<FlowDirection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrTrace {
    pub id: String,
    pub source_bus: String,
    pub load_bus: String,
    pub params: SvrControllerParams,
    pub step_pu: f64,
    /// Tap in effect for each step's solution.
    pub tap: Vec<i32>,
    /// A command was issued at this step (it takes effect at the next one).
    pub event: Vec<bool>,
}

/// Recorded run, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt_s: f64,
    pub time_s: Vec<f64>,
    pub buses: Vec<BusTrace>,
    pub branches: Vec<BranchTrace>,
    pub svrs: Vec<SvrTrace>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    pub fn bus(&self, id: &str) -> Option<&BusTrace> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn branch(&self, id: &str) -> Option<&BranchTrace> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn svr(&self, id: &str) -> Option<&SvrTrace> {
        self.svrs.iter().find(|s| s.id == id)
    }

    pub fn vmag(&self, bus: &str) -> Option<&[f64]> {
        self.bus(bus).map(|b| b.vmag_pu.as_slice())
    }

    /// Detector view of one regulator. Steps where it is de-energized are skipped.
    pub fn svr_samples(&self, id: &str) -> Option<Vec<SvrSample>> {
        let svr = self.svr(id)?;
        let vs = self.vmag(&svr.source_bus)?;
        let vl = self.vmag(&svr.load_bus)?;
        let dir = &self.branch(id)?.direction;
        Some(
            (0..self.len())
                .filter(|&k| vs[k] > 0.0 && vl[k] > 0.0)
                .map(|k| {
                    let side = regulation_side(svr.params.mode, dir[k]);
                    let (v_reg, v_opp) = match side {
                        RegulationSide::SourceTerminal => (vs[k], vl[k]),
                        RegulationSide::LoadTerminal => (vl[k], vs[k]),
                    };
                    SvrSample {
                        time_s: self.time_s[k],
                        tap: svr.tap[k],
                        side,
                        v_reg_pu: v_reg,
                        v_opposite_pu: v_opp,
                    }
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvrSummary {
    pub id: String,
    pub tap_operations: usize,
    pub final_tap: i32,
    pub min_tap: i32,
    pub max_tap: i32,
    pub reverse_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusSummary {
    pub id: String,
    pub minutes_outside: f64,
    /// Over energized steps; `None` if never energized.
    pub v_min_pu: Option<f64>,
    pub v_max_pu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSummary {
    pub id: String,
    /// Integral of active flow (MWh), positive in the branch's reference direction.
    pub energy_mwh: f64,
    pub reverse_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub steps: usize,
    pub dt_s: f64,
    pub band: VoltageBand,
    pub runaway_criteria: RunawaySettings,
    pub svrs: Vec<SvrSummary>,
    pub buses: Vec<BusSummary>,
    pub branches: Vec<BranchSummary>,
    pub runaway_events: Vec<RunawayEvent>,
    /// Regulator settings, kept so that the report can be re-derived from recorded data.
    pub svr_settings: Vec<SvrSettings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunawaySettings {
    pub window_s: f64,
    pub ineffective_fraction: f64,
    pub ineffective_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvrSettings {
    pub id: String,
    pub source_bus: String,
    pub load_bus: String,
    pub params: SvrControllerParams,
    pub step_pu: f64,
}

impl SummaryReport {
    pub fn svr(&self, id: &str) -> Option<&SvrSummary> {
        self.svrs.iter().find(|s| s.id == id)
    }

    pub fn bus(&self, id: &str) -> Option<&BusSummary> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn runaway_for(&self, svr: &str) -> impl Iterator<Item = &RunawayEvent> {
        let svr = svr.to_string();
        self.runaway_events.iter().filter(move |e| e.svr == svr)
    }
}

pub fn mode_name(mode: ControlMode) -> &'static str {
    match mode {
        ControlMode::Bidirectional => "bidirectional",
        ControlMode::Cogeneration => "cogeneration",
    }
}

fn side_name(side: RegulationSide) -> &'static str {
    match side {
        RegulationSide::SourceTerminal => "source",
        RegulationSide::LoadTerminal => "load",
    }
}

fn opt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Header and settings use exact round-trip formatting so that the
        // report can be re-derived from the file.
        let mut s = String::new();
        writeln!(s, "# svrqsts summary")?;
        writeln!(s, "steps {}", self.steps)?;
        writeln!(s, "dt_s {}", self.dt_s)?;
        writeln!(s, "band_pu {} {}", self.band.lo_pu, self.band.hi_pu)?;
        writeln!(s, "runaway_window_s {}", self.runaway_criteria.window_s)?;
        writeln!(s, "ineffective_fraction {}", self.runaway_criteria.ineffective_fraction)?;
        writeln!(s, "ineffective_count {}", self.runaway_criteria.ineffective_count)?;
        for st in &self.svr_settings {
            let p = &st.params;
            writeln!(s)?;
            writeln!(s, "[settings {}]", st.id)?;
            writeln!(s, "source_bus {}", st.source_bus)?;
            writeln!(s, "load_bus {}", st.load_bus)?;
            writeln!(s, "mode {}", mode_name(p.mode))?;
            writeln!(s, "v_ref_pu {}", p.v_ref_pu)?;
            writeln!(s, "deadband_pu {}", p.deadband_pu)?;
            writeln!(s, "hysteresis_pu {}", p.hysteresis_pu)?;
            writeln!(s, "t1_s {}", p.t1_s)?;
            writeln!(s, "t2_s {}", p.t2_s)?;
            writeln!(s, "step_pu {}", st.step_pu)?;
        }
        for sv in &self.svrs {
            writeln!(s)?;
            writeln!(s, "[svr {}]", sv.id)?;
            writeln!(s, "tap_operations {}", sv.tap_operations)?;
            writeln!(s, "final_tap {}", sv.final_tap)?;
            writeln!(s, "tap_range {} {}", sv.min_tap, sv.max_tap)?;
            writeln!(s, "reverse_steps {}", sv.reverse_steps)?;
        }
        for b in &self.buses {
            writeln!(s)?;
            writeln!(s, "[bus {}]", b.id)?;
            writeln!(s, "minutes_outside_band {:.6}", b.minutes_outside)?;
            writeln!(s, "v_min_pu {}", opt6(b.v_min_pu))?;
            writeln!(s, "v_max_pu {}", opt6(b.v_max_pu))?;
        }
        for b in &self.branches {
            writeln!(s)?;
            writeln!(s, "[branch {}]", b.id)?;
            writeln!(s, "energy_mwh {:.6}", b.energy_mwh)?;
            writeln!(s, "reverse_steps {}", b.reverse_steps)?;
        }
        writeln!(s)?;
        writeln!(s, "[runaway]")?;
        writeln!(s, "count {}", self.runaway_events.len())?;
        for e in &self.runaway_events {
            writeln!(
                s,
                "{} {} start_s={:.6} end_s={:.6} regulated={} final_tap={}",
                e.svr,
                e.classification.as_str(),
                e.start_s,
                e.end_s,
                side_name(e.terminal_regulated),
                e.final_tap
            )?;
        }
        f.write_str(&s)
    }
}

/// Aggregates a recorded series. Buses at 0 pu (de-energized) never count as
/// violations and are excluded from min/max.
pub fn summarize(ts: &TimeSeries, band: &VoltageBand, criteria: &RunawayCriteria) -> SummaryReport {
    let svrs = ts
        .svrs
        .iter()
        .map(|s| {
            let reverse_steps = ts
                .branch(&s.id)
                .map(|b| b.direction.iter().filter(|d| **d == FlowDirection::Reverse).count())
                .unwrap_or(0);
            SvrSummary {
                id: s.id.clone(),
                tap_operations: s.event.iter().filter(|e| **e).count(),
                final_tap: s.tap.last().copied().unwrap_or(0),
                min_tap: s.tap.iter().copied().min().unwrap_or(0),
                max_tap: s.tap.iter().copied().max().unwrap_or(0),
                reverse_steps,
            }
        })
        .collect();

    let buses = ts
        .buses
        .iter()
        .map(|b| {
            let energized = b.vmag_pu.iter().copied().filter(|v| *v > 0.0);
            let outside = energized.clone().filter(|v| !band.contains(*v)).count();
            BusSummary {
                id: b.id.clone(),
                minutes_outside: outside as f64 * ts.dt_s / 60.0,
                v_min_pu: energized.clone().reduce(f64::min),
                v_max_pu: energized.reduce(f64::max),
            }
        })
        .collect();

    let branches = ts
        .branches
        .iter()
        .map(|b| BranchSummary {
            id: b.id.clone(),
            energy_mwh: b.p_mw.iter().sum::<f64>() * ts.dt_s / 3600.0,
            reverse_steps: b.direction.iter().filter(|d| **d == FlowDirection::Reverse).count(),
        })
        .collect();

    let mut runaway_events = Vec::new();
    for s in &ts.svrs {
        if let Some(samples) = ts.svr_samples(&s.id) {
            let c = RunawayCriteria {
                step_pu: s.step_pu,
                ..*criteria
            };
            runaway_events.extend(detect_runaway(&s.id, &samples, &s.params, &c));
        }
    }

    SummaryReport {
        steps: ts.len(),
        dt_s: ts.dt_s,
        band: *band,
        runaway_criteria: RunawaySettings {
            window_s: criteria.window_s,
            ineffective_fraction: criteria.ineffective_fraction,
            ineffective_count: criteria.ineffective_count,
        },
        svrs,
        buses,
        branches,
        runaway_events,
        svr_settings: ts
            .svrs
            .iter()
            .map(|s| SvrSettings {
                id: s.id.clone(),
                source_bus: s.source_bus.clone(),
                load_bus: s.load_bus.clone(),
                params: s.params,
                step_pu: s.step_pu,
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub series: TimeSeries,
    pub summary: SummaryReport,
    pub commands: Vec<TapCommand>,
}

/// Per-load demand evaluator.
struct LoadEval<'a> {
    bus: usize,
    demand: &'a Demand,
}

fn eval_demand(d: &Demand, profiles: &ProfileSet, t: f64) -> Result<Complex64, ProfileError> {
    let get = |name: &str| profiles.get(name).ok_or_else(|| ProfileError::Unknown(name.to_string()));
    Ok(match d {
        Demand::Fixed { p_mw, q_mvar } => Complex64::new(*p_mw, *q_mvar),
        Demand::Profile {
            profile,
            scale,
            power_factor,
        } => {
            let p = scale * get(profile)?.curve().at(t)?;
            let q = p * (1.0 - power_factor * power_factor).sqrt() / power_factor;
            Complex64::new(p, q)
        }
        Demand::ProfileQ {
            profile,
            q_profile,
            scale,
        } => Complex64::new(scale * get(profile)?.curve().at(t)?, scale * get(q_profile)?.curve().at(t)?),
    })
}

fn svr_order(model: &RadialModel, net: &Network) -> Vec<usize> {
    let depth = model.depth();
    let idx: std::collections::BTreeMap<&str, usize> =
        net.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
    let mut order: Vec<(usize, usize)> = net
        .svrs
        .iter()
        .enumerate()
        .filter_map(|(k, s)| {
            let a = depth[idx[s.source_bus.as_str()]]?;
            let b = depth[idx[s.load_bus.as_str()]]?;
            Some((a.min(b), k))
        })
        .collect();
    order.sort();
    order.into_iter().map(|(_, k)| k).collect()
}

/// Runs a simulation from the switch states, taps and dispatch stored in `net`.
pub fn run(
    net: &Network,
    profiles: &ProfileSet,
    events: &[ScenarioEvent],
    cfg: &SimulationConfig,
) -> Result<SimulationOutput, EngineError> {
    net.validate()?;
    let steps = cfg.steps()?;

    let mut events: Vec<&ScenarioEvent> = events.iter().collect();
    for e in &events {
        if net.switch(&e.device).is_none() {
            return Err(EngineError::Config(format!("event references unknown device `{}`", e.device)));
        }
        if !(e.time_s >= 0.0 && e.time_s <= cfg.duration_s + TIME_EPS) {
            return Err(EngineError::Config(format!(
                "event on `{}` at {} s is outside the horizon",
                e.device, e.time_s
            )));
        }
    }
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));

    let bus_idx: std::collections::BTreeMap<&str, usize> =
        net.buses.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
    let loads: Vec<LoadEval> = net
        .loads
        .iter()
        .map(|l| LoadEval {
            bus: bus_idx[l.bus.as_str()],
            demand: &l.demand,
        })
        .collect();

    // Recorded buses: selection first, then regulator terminals.
    let mut rec_buses: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    let terminals = net.svrs.iter().flat_map(|s| [s.source_bus.clone(), s.load_bus.clone()]);
    for b in cfg.record.buses.iter().cloned().chain(terminals) {
        if !bus_idx.contains_key(b.as_str()) {
            return Err(EngineError::Config(format!("recorded bus `{b}` does not exist")));
        }
        if seen.insert(b.clone()) {
            rec_buses.push(b);
        }
    }
    let mut rec_branches: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for b in cfg.record.branches.iter().cloned().chain(net.svrs.iter().map(|s| s.id.clone())) {
        if seen.insert(b.clone()) {
            rec_branches.push(b);
        }
    }

    let mut states = net.switch_states();
    let mut model = RadialModel::compile(net, &states).map_err(|source| EngineError::Topology {
        step: 0,
        time_s: 0.0,
        source,
    })?;
    let rec_bus_idx: Vec<usize> = rec_buses.iter().map(|b| bus_idx[b.as_str()]).collect();
    let rec_branch_idx: Vec<usize> = rec_branches
        .iter()
        .map(|b| {
            model
                .branch_index(b)
                .ok_or_else(|| EngineError::Config(format!("recorded branch `{b}` does not exist")))
        })
        .collect::<Result<_, _>>()?;
    let mut order = svr_order(&model, net);

    let mut taps = net.taps();
    let mut ctrl = vec![SvrControllerState::default(); net.svrs.len()];
    let svr_terms: Vec<(usize, usize)> = net
        .svrs
        .iter()
        .map(|s| (bus_idx[s.source_bus.as_str()], bus_idx[s.load_bus.as_str()]))
        .collect();
    let svr_branch: Vec<usize> = net
        .svrs
        .iter()
        .map(|s| model.branch_index(&s.id).expect("svr branch"))
        .collect();

    let mut series = TimeSeries {
        dt_s: cfg.dt_s,
        time_s: Vec::with_capacity(steps),
        buses: rec_buses
            .iter()
            .map(|id| BusTrace {
                id: id.clone(),
                vmag_pu: Vec::with_capacity(steps),
            })
            .collect(),
        branches: rec_branches
            .iter()
            .map(|id| BranchTrace {
                id: id.clone(),
                p_mw: Vec::with_capacity(steps),
                q_mvar: Vec::with_capacity(steps),
                direction: Vec::with_capacity(steps),
            })
            .collect(),
        svrs: net
            .svrs
            .iter()
            .map(|s| SvrTrace {
                id: s.id.clone(),
                source_bus: s.source_bus.clone(),
                load_bus: s.load_bus.clone(),
                params: s.controller,
                step_pu: s.step_size_pu,
                tap: Vec::with_capacity(steps),
                event: Vec::with_capacity(steps),
            })
            .collect(),
    };
    let mut commands = Vec::new();
    let mut next_event = 0;
    let mut last_good: Option<PowerFlowSolution> = None;
    let mut demand = vec![Complex64::new(0.0, 0.0); net.buses.len()];
    let mut issued = vec![false; net.svrs.len()];

    for step in 0..steps {
        let t = step as f64 * cfg.dt_s;

        let mut switched = false;
        while next_event < events.len() && events[next_event].time_s <= t + TIME_EPS {
            let e = events[next_event];
            states.set(e.device.clone(), e.new_state);
            log::info!("t={t} s: {} -> {:?}", e.device, e.new_state);
            switched = true;
            next_event += 1;
        }
        if switched {
            model = RadialModel::compile(net, &states).map_err(|source| EngineError::Topology {
                step,
                time_s: t,
                source,
            })?;
            order = svr_order(&model, net);
        }

        demand.iter_mut().for_each(|d| *d = Complex64::new(0.0, 0.0));
        for l in &loads {
            demand[l.bus] += eval_demand(l.demand, profiles, t)?;
        }
        for g in &net.generators {
            demand[bus_idx[g.bus.as_str()]] -= Complex64::new(g.p_mw(t), g.q_mvar);
        }

        let ratios: Vec<f64> = net
            .svrs
            .iter()
            .zip(&taps)
            .map(|(s, &tap)| if s.in_service { s.ratio(tap) } else { Ok(1.0) })
            .collect::<Result<_, _>>()?;
        let sol = match model.solve(&ratios, &demand, &cfg.solver) {
            Ok(sol) => sol,
            Err(PowerFlowError::NonConvergence(_)) => {
                return Err(EngineError::NonConvergence {
                    step,
                    time_s: t,
                    last_good: last_good.map(Box::new),
                })
            }
            Err(PowerFlowError::Topology(source)) => {
                return Err(EngineError::Topology { step, time_s: t, source })
            }
            Err(other) => return Err(EngineError::Config(other.to_string())),
        };

        issued.iter_mut().for_each(|x| *x = false);
        for k in 0..net.svrs.len() {
            if !order.contains(&k) {
                ctrl[k] = SvrControllerState::default();
            }
        }
        let mut deltas = Vec::new();
        for &k in &order {
            let svr = &net.svrs[k];
            if !svr.in_service {
                continue;
            }
            let (src, load) = svr_terms[k];
            let p = sol.branch_s[svr_branch[k]].re;
            let side = regulation_side(svr.controller.mode, classify(p, cfg.solver.flow_deadband_mw));
            let v_reg = match side {
                RegulationSide::SourceTerminal => sol.v[src].norm(),
                RegulationSide::LoadTerminal => sol.v[load].norm(),
            };
            let (next, cmd) = controller_step(ctrl[k], &svr.controller, v_reg, side, taps[k], cfg.dt_s, t);
            ctrl[k] = next;
            if let Some(delta) = cmd {
                issued[k] = true;
                deltas.push((k, delta));
                commands.push(TapCommand {
                    svr: svr.id.clone(),
                    delta,
                    issued_at_s: t,
                });
            }
        }

        series.time_s.push(t);
        for (trace, &b) in series.buses.iter_mut().zip(&rec_bus_idx) {
            trace.vmag_pu.push(sol.v[b].norm());
        }
        for (trace, &bi) in series.branches.iter_mut().zip(&rec_branch_idx) {
            let s = sol.branch_s[bi];
            trace.p_mw.push(s.re);
            trace.q_mvar.push(s.im);
            trace.direction.push(classify(s.re, cfg.solver.flow_deadband_mw));
        }
        for (k, trace) in series.svrs.iter_mut().enumerate() {
            trace.tap.push(taps[k]);
            trace.event.push(issued[k]);
        }

        for (k, delta) in deltas {
            taps[k] += delta;
        }
        last_good = Some(sol);
    }

    let summary = summarize(&series, &cfg.band, &cfg.runaway);
    Ok(SimulationOutput {
        series,
        summary,
        commands,
    })
}
