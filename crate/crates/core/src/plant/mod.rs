//! Deterministic discrete-time simulation of the mixing module: tanks,
//! valves, pump, sensors and parametrized fault injection.
//!
//! Everything in here is plain data. `step` is a pure function of
//! (state, topology, dt), so independent simulations can run freely in
//! parallel and a twin sharing this code path reproduces the plant
//! bit-for-bit.

mod actions;
mod dynamics;
mod fault;
mod sensors;
mod state;
mod topology;

pub use actions::{apply_actions, Action, ActionError, Command};
pub use dynamics::{compute_flows, step, step_detailed, FlowSample, StepError, StepOutcome};
pub use fault::{inject_fault, FaultConfig, FaultError, FaultKind};
pub use sensors::{read_sensors, SensorReadings, GRAVITY, WATER_DENSITY};
pub use state::PlantState;
pub use topology::{
    Endpoint, PipeSpec, PlantTopology, PumpSpec, SensorKind, SensorSpec, TankSpec, TopologyError,
    ValveSpec, PUMP_ID, TANK_IDS, VALVE_IDS,
};
