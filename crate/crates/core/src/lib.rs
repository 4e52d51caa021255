//! Quasi-static time-series simulation of radial distribution feeders with
//! cascaded step voltage regulators and a dispatchable generator.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: network description, per-unit conversion, tap ratios;
//! - [`topology`]: switch-state validation and island detection;
//! - [`powerflow`]: backward/forward sweep for radial networks;
//! - [`control`]: regulator controller, cascade delays, runaway detection;
//! - [`profile`]: piecewise-linear load curves;
//! - [`engine`]: the time-stepping loop and summary statistics;
//! - [`record`]: fixed-format CSV output;
//! - [`scenarios`]: the twin-feeder case and its switching presets;
//! - [`predispatch`]: day-ahead export schedules that keep flow direct.

pub mod control;
pub mod engine;
pub mod error;
pub mod grid;
pub mod powerflow;
pub mod predispatch;
pub mod profile;
pub mod record;
pub mod scenarios;
pub mod topology;

pub use control::{
    assign_cascade_delays, controller_step, detect_runaway, regulation_side, ControlMode, RegulationSide,
    RunawayClass, RunawayCriteria, RunawayEvent, SvrControllerParams, SvrControllerState,
};
pub use engine::{run, summarize, ScenarioEvent, SimulationConfig, SimulationOutput, SummaryReport, TimeSeries};
pub use error::{DispatchError, EngineError, GridError, PowerFlowError, ProfileError};
pub use grid::{tap_ratio, Network, SwitchState, SwitchStates};
pub use powerflow::{classify, solve_radial, FlowDirection, PowerFlowSolution, SolverOptions};
pub use predispatch::{achievable_average, compute_schedule, verify_direct_flow, DispatchSchedule, Forecast, PredispatchParams};
pub use profile::{interpolate_profile, LoadProfile, ProfileSet};
pub use scenarios::{build_case_feeders, preset, trip_event, CaseParams, ScenarioPreset};
pub use topology::validate_topology;

// The guide's Rust snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub mod chapter0 {}
    #[doc = include_str!("../../../book/src/per_unit.md")]
    pub mod chapter1 {}
    #[doc = include_str!("../../../book/src/power_flow.md")]
    pub mod chapter2 {}
    #[doc = include_str!("../../../book/src/regulator.md")]
    pub mod chapter3 {}
    #[doc = include_str!("../../../book/src/engine.md")]
    pub mod chapter4 {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod chapter5 {}
    #[doc = include_str!("../../../book/src/predispatch.md")]
    pub mod chapter6 {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod chapter7 {}
}
