//! Day-ahead export schedule for a dispatchable generator.
//!
//! The schedule follows the downstream demand forecast so that the export
//! never exceeds a fixed fraction of the demand (keeping regulator flow
//! direct), honours a ramp limit, and averages to the contracted export.
//!
//! Steps: scale the forecast by a factor found by bisection and clamp it
//! into the feasible envelope; clip ramps with a forward/backward pass that
//! only ever lowers values; then restore the average by bisecting on a
//! uniform offset, re-clipping at every trial.

use serde::{Deserialize, Serialize};

use crate::control::RunawayEvent;
use crate::engine::{run, ScenarioEvent, SimulationConfig, SummaryReport};
use crate::error::{DispatchError, ProfileError};
use crate::grid::{Dispatch, Network};
use crate::profile::{PiecewiseLinear, ProfileSet};

/// Demand downstream of the most upstream regulator the generator can reverse, MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast(PiecewiseLinear);

impl Forecast {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        for (index, &(_, value)) in points.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(ProfileError::Negative { index, value });
            }
        }
        Ok(Forecast(PiecewiseLinear::new(points)?))
    }

    pub fn curve(&self) -> &PiecewiseLinear {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.mean()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Forecast(self.0.map_values(|v| v * k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredispatchParams {
    pub contract_avg_mw: f64,
    /// Export may not exceed `margin * demand`.
    pub margin: f64,
    pub ramp_limit_mw_per_min: f64,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    /// Spacing of schedule breakpoints; forecast breakpoints are always kept.
    pub grid_step_s: f64,
}

impl Default for PredispatchParams {
    fn default() -> Self {
        PredispatchParams {
            contract_avg_mw: 3.0,
            margin: 0.9,
            ramp_limit_mw_per_min: 0.5,
            p_min_mw: 0.0,
            p_max_mw: 12.5,
            grid_step_s: 60.0,
        }
    }
}

impl PredispatchParams {
    fn validate(&self) -> Result<(), DispatchError> {
        let bad = |m: &str| Err(DispatchError::Invalid(m.to_string()));
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return bad("margin must lie in (0, 1)");
        }
        if !(self.ramp_limit_mw_per_min > 0.0) {
            return bad("ramp limit must be positive");
        }
        if !(self.p_min_mw >= 0.0 && self.p_max_mw >= self.p_min_mw) {
            return bad("need 0 <= p_min <= p_max");
        }
        if !(self.contract_avg_mw >= 0.0) {
            return bad("contract average must be non-negative");
        }
        if !(self.grid_step_s > 0.0) {
            return bad("grid step must be positive");
        }
        Ok(())
    }
}

/// Piecewise-linear export schedule `(time_s, p_export_mw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DispatchSchedule(PiecewiseLinear);

impl DispatchSchedule {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        Ok(DispatchSchedule(PiecewiseLinear::new(points)?))
    }

    pub fn constant(p_mw: f64, duration_s: f64) -> Self {
        DispatchSchedule(PiecewiseLinear::constant(p_mw, 0.0, duration_s))
    }

    pub fn points(&self) -> &[(f64, f64)] {
        self.0.points()
    }

    /// Export at `t_s`; end values are held outside the span.
    pub fn value_at(&self, t_s: f64) -> f64 {
        self.0.eval(t_s)
    }

    pub fn max_abs_slope_mw_per_min(&self) -> f64 {
        self.points()
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs() * 60.0)
            .fold(0.0, f64::max)
    }
}

/// Exact time average of the piecewise-linear schedule over its span.
pub fn average_power(schedule: &DispatchSchedule) -> f64 {
    schedule.0.mean()
}

fn trapezoid_mean(t: &[f64], p: &[f64]) -> f64 {
    if t.len() < 2 {
        return p.first().copied().unwrap_or(0.0);
    }
    let area: f64 = (1..t.len()).map(|i| 0.5 * (p[i] + p[i - 1]) * (t[i] - t[i - 1])).sum();
    area / (t[t.len() - 1] - t[0])
}

/// Lowers values until every slope is within `rate_per_s`. With `cyclic`
/// the first and last points are the same instant of consecutive days.
fn ramp_clip(t: &[f64], p: &mut [f64], rate_per_s: f64, cyclic: bool) {
    let n = p.len();
    if n < 2 {
        return;
    }
    for _ in 0..8 {
        let before = p.to_vec();
        if cyclic {
            let m = p[0].min(p[n - 1]);
            p[0] = m;
            p[n - 1] = m;
        }
        for i in 1..n {
            p[i] = p[i].min(p[i - 1] + rate_per_s * (t[i] - t[i - 1]));
        }
        if cyclic {
            p[0] = p[0].min(p[n - 1]);
        }
        for i in (0..n - 1).rev() {
            p[i] = p[i].min(p[i + 1] + rate_per_s * (t[i + 1] - t[i]));
        }
        if cyclic {
            p[n - 1] = p[n - 1].min(p[0]);
        }
        if before == p {
            break;
        }
    }
}

fn bisect(mut lo: f64, mut hi: f64, target: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() <= tol {
            return mid;
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Breakpoint grid with the demand and export bounds at each point.
struct Grid {
    t: Vec<f64>,
    demand: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    rate_per_s: f64,
}

impl Grid {
    fn new(forecast: &Forecast, params: &PredispatchParams) -> Result<Self, DispatchError> {
        params.validate()?;
        let curve = forecast.curve();
        let (start, end) = (curve.start(), curve.end());
        if !(end > start) {
            return Err(DispatchError::Invalid("forecast must span a positive interval".into()));
        }

        let mut t: Vec<f64> = curve.points().iter().map(|p| p.0).collect();
        let mut k = 1.0;
        while start + k * params.grid_step_s < end {
            t.push(start + k * params.grid_step_s);
            k += 1.0;
        }
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

        let demand: Vec<f64> = t.iter().map(|&x| curve.eval(x)).collect();
        let upper: Vec<f64> = demand.iter().map(|l| params.p_max_mw.min(params.margin * l)).collect();
        let lower: Vec<f64> = upper.iter().map(|u| params.p_min_mw.min(*u)).collect();
        Ok(Grid {
            t,
            demand,
            upper,
            lower,
            rate_per_s: params.ramp_limit_mw_per_min / 60.0,
        })
    }

    /// Ramp-limited copy of `values`; the schedule repeats daily.
    fn shape(&self, mut values: Vec<f64>) -> Vec<f64> {
        ramp_clip(&self.t, &mut values, self.rate_per_s, true);
        values
    }

    fn mean(&self, p: &[f64]) -> f64 {
        trapezoid_mean(&self.t, p)
    }
}

/// Largest contract average the forecast can carry under `params`: the mean
/// of the ramp-limited upper bound.
pub fn achievable_average(forecast: &Forecast, params: &PredispatchParams) -> Result<f64, DispatchError> {
    let g = Grid::new(forecast, params)?;
    Ok(g.mean(&g.shape(g.upper.clone())))
}

pub fn compute_schedule(forecast: &Forecast, params: &PredispatchParams) -> Result<DispatchSchedule, DispatchError> {
    let g = Grid::new(forecast, params)?;
    let (t, demand, upper, lower) = (&g.t, &g.demand, &g.upper, &g.lower);
    let shape = |v: Vec<f64>| g.shape(v);
    let clamp_all = |v: &[f64]| -> Vec<f64> { (0..v.len()).map(|i| v[i].clamp(lower[i], upper[i])).collect() };

    let target = params.contract_avg_mw;
    let tol = 1e-9 * target.max(1.0);

    let achievable = trapezoid_mean(t, &shape(upper.clone()));
    if target > achievable + tol {
        return Err(DispatchError::Infeasible {
            contract_mw: target,
            achievable_mw: achievable,
        });
    }
    let minimum = trapezoid_mean(t, &shape(lower.clone()));
    if target < minimum - tol {
        return Err(DispatchError::BelowMinimum {
            contract_mw: target,
            minimum_mw: minimum,
        });
    }

    let finish = |p: Vec<f64>| Ok(DispatchSchedule(PiecewiseLinear::new(t.iter().copied().zip(p).collect())?));
    if target <= minimum + tol {
        return finish(shape(lower.clone()));
    }
    if target >= achievable - tol {
        return finish(shape(upper.clone()));
    }

    // Demand-proportional shape.
    let scaled = |beta: f64| -> Vec<f64> { clamp_all(&demand.iter().map(|l| beta * l).collect::<Vec<_>>()) };
    let beta = bisect(0.0, params.margin, target, tol, |b| trapezoid_mean(t, &scaled(b)));
    let base = shape(scaled(beta));

    // Restore the average after ramp clipping.
    let shifted = |delta: f64| -> Vec<f64> { shape(clamp_all(&base.iter().map(|p| p + delta).collect::<Vec<_>>())) };
    let p = if (trapezoid_mean(t, &base) - target).abs() <= tol {
        base
    } else {
        let span = upper.iter().copied().fold(0.0, f64::max) + 1.0;
        let delta = bisect(-span, span, target, tol, |d| trapezoid_mean(t, &shifted(d)));
        shifted(delta)
    };

    finish(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrFlowCheck {
    pub svr: String,
    pub reverse_steps: usize,
    /// Smallest active flow seen through the regulator, MW.
    pub min_flow_mw: f64,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub svrs: Vec<SvrFlowCheck>,
    /// Smallest direct-flow headroom over all regulators, MW.
    pub min_margin_mw: f64,
    pub runaway_events: Vec<RunawayEvent>,
    pub summary: SummaryReport,
}

impl VerificationReport {
    pub fn all_direct(&self) -> bool {
        self.svrs.iter().all(|s| s.reverse_steps == 0)
    }
}

/// Runs the QSTS with `schedule` as the export of `generator` and reports
/// how often each regulator saw reverse flow.
pub fn verify_direct_flow(
    schedule: &DispatchSchedule,
    net: &Network,
    generator: &str,
    profiles: &ProfileSet,
    events: &[ScenarioEvent],
    cfg: &SimulationConfig,
) -> Result<VerificationReport, DispatchError> {
    let mut net = net.clone();
    let gen = net
        .generators
        .iter_mut()
        .find(|g| g.id == generator)
        .ok_or_else(|| DispatchError::Invalid(format!("unknown generator `{generator}`")))?;
    gen.export = Dispatch::Schedule(schedule.clone());

    let out = run(&net, profiles, events, cfg)?;
    let svrs: Vec<SvrFlowCheck> = net
        .svrs
        .iter()
        .map(|s| {
            let b = out.series.branch(&s.id).expect("regulator flows are always recorded");
            SvrFlowCheck {
                svr: s.id.clone(),
                reverse_steps: out.summary.svr(&s.id).map(|x| x.reverse_steps).unwrap_or(0),
                min_flow_mw: b.p_mw.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let min_margin_mw = svrs.iter().map(|s| s.min_flow_mw).fold(f64::INFINITY, f64::min);
    Ok(VerificationReport {
        svrs,
        min_margin_mw,
        runaway_events: out.summary.runaway_events.clone(),
        summary: out.summary,
    })
}
