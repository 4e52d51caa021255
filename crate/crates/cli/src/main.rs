use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use svrqsts_cli::config::{DispatchArg, Overrides};
use svrqsts_cli::{cmd_predispatch, cmd_report, cmd_run, PredispatchArgs};

/// Quasi-static time-series studies of radial feeders with step voltage regulators.
#[derive(Parser)]
#[command(name = "svrqsts", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a simulation and write voltages.csv, flows.csv, taps.csv and summary.txt.
    Run(RunArgs),
    /// Shape a day-ahead export schedule to a load forecast.
    Predispatch(PdArgs),
    /// Re-derive summary.txt from a run directory's CSVs.
    Report {
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Independent, FullToPR09, FullToPR11 or PartialTransfer.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// DEVICE@SECONDS, repeatable.
    #[arg(long = "trip")]
    trips: Vec<String>,
    /// Constant export in MW, or a `time_s,p_mw` schedule file.
    #[arg(long)]
    dispatch: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PdArgs {
    /// `time_s,load_mw` CSV; defaults to the builtin partial-transfer forecast.
    #[arg(long)]
    forecast: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    contract: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    /// MW per minute.
    #[arg(long)]
    ramp: Option<f64>,
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Also run the day with the schedule and count reverse-flow steps.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SVRQSTS_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(
            a.config.as_deref(),
            &Overrides {
                preset: a.preset,
                duration_s: a.duration,
                dt_s: a.dt,
                trips: a.trips,
                dispatch: a.dispatch.as_deref().map(DispatchArg::parse),
                out: a.out,
            },
        ),
        Cmd::Predispatch(a) => cmd_predispatch(&PredispatchArgs {
            forecast: a.forecast,
            config: a.config,
            contract_mw: a.contract,
            margin: a.margin,
            ramp_mw_per_min: a.ramp,
            p_min_mw: a.p_min,
            p_max_mw: a.p_max,
            grid_step_s: a.grid_step,
            verify: a.verify,
            out: a.out,
        }),
        Cmd::Report { dir } => cmd_report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
