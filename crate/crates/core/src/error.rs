use thiserror::Error;

use crate::powerflow::PowerFlowSolution;

/// Errors raised while building or validating a network description.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("tap position {0} outside [-16, 16]")]
    TapOutOfRange(i32),
    #[error("per-unit bases must be positive (v_base_kv = {v_base_kv}, s_base_mva = {s_base_mva})")]
    InvalidBase { v_base_kv: f64, s_base_mva: f64 },
    #[error("unknown bus `{0}`")]
    UnknownBus(String),
    #[error("unknown switch `{0}`")]
    UnknownSwitch(String),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("energized island contains a loop through element `{element}`")]
    Loop { element: String },
    #[error("island is fed by more than one source: {sources:?}")]
    MultiSource { sources: Vec<String> },
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },
}

impl GridError {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        GridError::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Topology(#[from] GridError),
    #[error("sweep did not converge after {} iterations (mismatch {:.3e} pu)", .0.iterations, .0.mismatch)]
    NonConvergence(Box<PowerFlowSolution>),
    #[error("unknown branch `{0}`")]
    UnknownBranch(String),
    #[error("missing injection for bus `{0}`")]
    UnknownInjectionBus(String),
}

#[derive(Debug, Clone, Error)]
pub enum ProfileError {
    #[error("profile needs at least one breakpoint")]
    Empty,
    #[error("breakpoint times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("negative power {value} at index {index}")]
    Negative { index: usize, value: f64 },
    #[error("time {t} s outside profile span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("unknown profile `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("topology invalid at step {step} (t = {time_s} s): {source}")]
    Topology {
        step: usize,
        time_s: f64,
        #[source]
        source: GridError,
    },
    #[error("power flow did not converge at step {step} (t = {time_s} s)")]
    NonConvergence {
        step: usize,
        time_s: f64,
        last_good: Option<Box<PowerFlowSolution>>,
    },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Error)]
pub enum DispatchError {
    #[error("contract average {contract_mw} MW exceeds achievable {achievable_mw:.6} MW")]
    Infeasible { contract_mw: f64, achievable_mw: f64 },
    #[error("contract average {contract_mw} MW is below the minimum achievable {minimum_mw:.6} MW")]
    BelowMinimum { contract_mw: f64, minimum_mw: f64 },
    #[error("invalid pre-dispatch input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
