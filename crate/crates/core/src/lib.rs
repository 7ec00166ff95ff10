//! Closed-loop fault handling for a four-tank mixing module.
//!
//! The crate wires together a deterministic plant simulator with fault
//! injection ([`plant`]), a shadow digital twin used to pre-validate
//! candidate actuator commands ([`twin`]), a structured prompt engine
//! ([`prompt`]), pluggable decision backends ([`agents`]), a validation
//! rule engine ([`validation`]) and the iterative control loop with
//! reprompting and forced-execution fallback ([`control`]).
//! Run configuration, metric scoring and CSV export live in [`config`],
//! [`metrics`] and [`export`].

pub mod agents;
pub mod config;
pub mod control;
pub mod export;
pub mod metrics;
pub mod plant;
pub mod prompt;
pub mod scenarios;
pub mod twin;
pub mod validation;

pub use control::{run, LoopConfig, RunOutcome, RunResult};
pub use plant::{Action, Command, FaultConfig, FaultKind, PlantState, PlantTopology};
