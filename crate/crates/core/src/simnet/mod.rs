//! Deterministic discrete-event simulation of agents exchanging blocks over
//! lossy links, with scripted and Byzantine behaviour.

pub mod adversary;
mod config;
mod engine;
pub mod grassroots;
mod liveness;
pub mod random;
mod trace;
pub mod village;

pub use config::{
    Action, AgentSpec, BalanceExpectation, ConfigError, Expectations, LinkOverride, LinkSpec,
    Role, ScenarioConfig, Step, ViolationExpectation, SCHEMA_VERSION,
};
pub use engine::{
    run, run_with, AgentReport, Check, RunOptions, RunOutcome, Simulation, Summary,
    ViolationReport,
};
pub use liveness::{check_liveness, Claim, LivenessReport};
pub use trace::{first_difference, read_trace, trace_to_string, write_trace, EventKind, TraceEvent};
