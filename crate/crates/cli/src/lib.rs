//! Command implementations behind the `svrqsts` binary.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 power flow
//! non-convergence, 3 infeasible pre-dispatch contract.

pub mod config;
pub mod files;
pub mod report;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use svrqsts::engine::{run, summarize, SimulationOutput};
use svrqsts::grid::Dispatch;
use svrqsts::predispatch::{achievable_average, average_power, compute_schedule, verify_direct_flow, Forecast, PredispatchParams};
use svrqsts::record::{fmt6, quantize, write_flows, write_taps, write_voltages, FLOWS_CSV, TAPS_CSV, VOLTAGES_CSV};
use svrqsts::scenarios::{partial_transfer_forecast, settle_taps, CaseParams};
use svrqsts::{DispatchError, EngineError};

use config::{pick_generator, Overrides, RunConfig, Study};
use files::{read_series, read_two_columns};
use report::parse_header;

pub const SUMMARY_TXT: &str = "summary.txt";
pub const SCHEDULE_CSV: &str = "schedule.csv";
pub const FEASIBILITY_TXT: &str = "feasibility.txt";
pub const DEFAULT_OUT: &str = "svrqsts-out";

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: i32, error: anyhow::Error) -> Self {
        Failure { code, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure::new(1, error)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = if matches!(e, EngineError::NonConvergence { .. }) { 2 } else { 1 };
        Failure::new(code, e.into())
    }
}

impl From<DispatchError> for Failure {
    fn from(e: DispatchError) -> Self {
        match e {
            DispatchError::Engine(e) => e.into(),
            DispatchError::Infeasible { .. } | DispatchError::BelowMinimum { .. } => Failure::new(3, e.into()),
            e => Failure::new(1, e.into()),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

fn load_config(path: Option<&Path>, o: &Overrides) -> anyhow::Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(o);
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.as_deref().map(|o| cfg.resolve(o)).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

/// Runs the study with its taps pre-settled.
pub fn simulate(study: &Study) -> CmdResult<SimulationOutput> {
    let net = if study.settle_s > 0.0 {
        settle_taps(&study.net, &study.profiles, 0.0, study.settle_s, &study.cfg)?
    } else {
        study.net.clone()
    };
    Ok(run(&net, &study.profiles, &study.events, &study.cfg)?)
}

/// Writes the three CSVs and `summary.txt`; the summary is computed from
/// the series as written.
pub fn write_run(dir: &Path, out: &SimulationOutput, cfg: &svrqsts::SimulationConfig) -> anyhow::Result<String> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let ts = quantize(&out.series);
    let csvs: [(&str, fn(&svrqsts::TimeSeries, &mut BufWriter<File>) -> std::io::Result<()>); 3] = [
        (VOLTAGES_CSV, |t, w| write_voltages(t, w)),
        (FLOWS_CSV, |t, w| write_flows(t, w)),
        (TAPS_CSV, |t, w| write_taps(t, w)),
    ];
    for (name, write) in csvs {
        let path = dir.join(name);
        let mut w = create(&path)?;
        write(&ts, &mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = summarize(&ts, &cfg.band, &cfg.runaway).to_string();
    fs::write(dir.join(SUMMARY_TXT), &summary).with_context(|| format!("writing {SUMMARY_TXT}"))?;
    Ok(summary)
}

pub fn cmd_run(config: Option<&Path>, o: &Overrides) -> CmdResult {
    let cfg = load_config(config, o)?;
    let study = cfg.build()?;
    let dir = out_dir(&cfg);
    log::info!("running {} steps of {} s", study.cfg.steps()?, study.cfg.dt_s);
    let out = simulate(&study)?;
    write_run(&dir, &out, &study.cfg)?;
    println!(
        "{} steps, {} tap operations, {} runaway events -> {}",
        out.series.len(),
        out.summary.svrs.iter().map(|s| s.tap_operations).sum::<usize>(),
        out.summary.runaway_events.len(),
        dir.display()
    );
    Ok(())
}

/// Re-derives the summary of a run directory and prints it. Fails if it
/// differs from the stored `summary.txt`.
pub fn cmd_report(dir: &Path) -> CmdResult {
    let stored_path = dir.join(SUMMARY_TXT);
    let stored =
        fs::read_to_string(&stored_path).with_context(|| format!("cannot read {}", stored_path.display()))?;
    let h = parse_header(&stored)?;
    let ts = read_series(dir, h.dt_s, h.steps, &h.settings)?;
    let derived = summarize(&ts, &h.band, &h.criteria).to_string();
    print!("{derived}");
    if derived != stored {
        let line = derived
            .lines()
            .zip(stored.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or_else(|| derived.lines().count().min(stored.lines().count()) + 1);
        return Err(anyhow!("re-derived summary differs from {} at line {line}", stored_path.display()).into());
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct PredispatchArgs {
    pub forecast: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub contract_mw: Option<f64>,
    pub margin: Option<f64>,
    pub ramp_mw_per_min: Option<f64>,
    pub p_min_mw: Option<f64>,
    pub p_max_mw: Option<f64>,
    pub grid_step_s: Option<f64>,
    pub verify: bool,
    pub out: Option<PathBuf>,
}

pub fn cmd_predispatch(a: &PredispatchArgs) -> CmdResult {
    let o = Overrides {
        out: a.out.clone(),
        ..Default::default()
    };
    let cfg = load_config(a.config.as_deref(), &o)?;
    let case = cfg.case_params()?;

    let forecast = match (&a.forecast, &case) {
        (Some(f), _) => Forecast::new(read_two_columns(f)?).context("forecast")?,
        (None, Some(p)) => partial_transfer_forecast(p).context("builtin forecast")?,
        (None, None) => return Err(anyhow!("a network file needs --forecast").into()),
    };
    let mut params = case.as_ref().map(CaseParams::predispatch_params).unwrap_or_default();
    cfg.predispatch.apply(&mut params);
    let flags = config::PredispatchSection {
        contract_avg_mw: a.contract_mw,
        margin: a.margin,
        ramp_limit_mw_per_min: a.ramp_mw_per_min,
        p_min_mw: a.p_min_mw,
        p_max_mw: a.p_max_mw,
        grid_step_s: a.grid_step_s,
    };
    flags.apply(&mut params);

    let dir = out_dir(&cfg);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut report = String::new();
    let header = |r: &mut String, status: &str, p: &PredispatchParams| {
        let _ = writeln!(r, "status {status}");
        let _ = writeln!(r, "contract_avg_mw {}", fmt6(p.contract_avg_mw));
        let _ = writeln!(r, "forecast_mean_mw {}", fmt6(forecast.mean()));
    };

    let achievable = achievable_average(&forecast, &params)?;
    let schedule = match compute_schedule(&forecast, &params) {
        Ok(s) => s,
        Err(e) => {
            let status = match e {
                DispatchError::BelowMinimum { .. } => "below_minimum",
                _ => "infeasible",
            };
            header(&mut report, status, &params);
            let _ = writeln!(report, "achievable_avg_mw {}", fmt6(achievable));
            fs::write(dir.join(FEASIBILITY_TXT), &report).context("writing feasibility report")?;
            print!("{report}");
            return Err(e.into());
        }
    };

    let mut w = create(&dir.join(SCHEDULE_CSV))?;
    writeln!(w, "time_s,p_mw").context("writing schedule")?;
    for (t, p) in schedule.points() {
        writeln!(w, "{},{}", fmt6(*t), fmt6(*p)).context("writing schedule")?;
    }
    w.flush().context("writing schedule")?;

    header(&mut report, "feasible", &params);
    let _ = writeln!(report, "achievable_avg_mw {}", fmt6(achievable));
    let _ = writeln!(report, "schedule_avg_mw {}", fmt6(average_power(&schedule)));
    let _ = writeln!(report, "max_ramp_mw_per_min {}", fmt6(schedule.max_abs_slope_mw_per_min()));

    if a.verify {
        let study = cfg.build()?;
        let gen = pick_generator(&study.net, cfg.dispatch.as_ref().and_then(|d| d.generator.as_deref()))?;
        let mut net = study.net.clone();
        net.generators.iter_mut().find(|g| g.id == gen).unwrap().export = Dispatch::Schedule(schedule.clone());
        if study.settle_s > 0.0 {
            net = settle_taps(&net, &study.profiles, 0.0, study.settle_s, &study.cfg)?;
        }
        let v = verify_direct_flow(&schedule, &net, &gen, &study.profiles, &study.events, &study.cfg)?;
        let _ = writeln!(report, "direct_flow {}", if v.all_direct() { "yes" } else { "no" });
        for s in &v.svrs {
            let _ = writeln!(report, "reverse_steps {} {}", s.svr, s.reverse_steps);
        }
        let _ = writeln!(report, "min_margin_mw {}", fmt6(v.min_margin_mw));
        let _ = writeln!(report, "runaway_events {}", v.runaway_events.len());
    }
    fs::write(dir.join(FEASIBILITY_TXT), &report).context("writing feasibility report")?;
    print!("{report}");
    Ok(())
}
