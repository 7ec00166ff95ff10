use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fault::FaultKind;
use super::state::PlantState;
use super::topology::{Endpoint, PlantTopology};

/// Per-pipe and per-tank flows of one step, computed from the pre-step
/// state. All values in m³/s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowSample {
    /// Pipe id -> flow from source to sink.
    pub pipe_flows: BTreeMap<String, f64>,
    /// Tank id -> leakage loss.
    pub leakage: BTreeMap<String, f64>,
}

impl FlowSample {
    pub fn pipe(&self, id: &str) -> f64 {
        self.pipe_flows.get(id).copied().unwrap_or(0.0)
    }

    pub fn total_leakage(&self) -> f64 {
        self.leakage.values().sum()
    }

    /// Flow through the pumped transfer pipe.
    pub fn transfer(&self, topology: &PlantTopology) -> f64 {
        self.pipe(&topology.transfer_pipe().id)
    }

    /// Net volume entering the plant across its boundary.
    pub fn boundary_inflow(&self, topology: &PlantTopology) -> f64 {
        topology
            .pipes
            .iter()
            .filter(|p| p.source == Endpoint::Supply)
            .map(|p| self.pipe(&p.id))
            .sum()
    }

    /// Net volume leaving the plant across its boundary (excluding leaks).
    pub fn boundary_outflow(&self, topology: &PlantTopology) -> f64 {
        topology
            .pipes
            .iter()
            .filter(|p| p.sink == Endpoint::Drain)
            .map(|p| self.pipe(&p.id))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: PlantState,
    pub flows: FlowSample,
    /// True when any tank level was clamped to [0, h_max] this step.
    /// Clamped steps are excluded from the volume-balance identity.
    pub clamped: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("timestep {0} must be > 0")]
    InvalidTimestep(f64),
    #[error("state references ids unknown to the topology")]
    TopologyMismatch,
}

fn clog_severity(state: &PlantState, pipe_id: &str) -> f64 {
    state
        .active_faults
        .iter()
        .filter(|f| {
            f.kind == FaultKind::Clogging && f.location == pipe_id && f.is_active(state.time)
        })
        .map(|f| f.severity)
        .fold(0.0, f64::max)
}

fn degradation_severity(state: &PlantState) -> f64 {
    state
        .active_faults
        .iter()
        .filter(|f| f.kind == FaultKind::PumpDegradation && f.is_active(state.time))
        .map(|f| f.severity)
        .fold(0.0, f64::max)
}

fn leak_severity(state: &PlantState, tank_id: &str) -> f64 {
    state
        .active_faults
        .iter()
        .filter(|f| {
            f.kind == FaultKind::Leakage && f.location == tank_id && f.is_active(state.time)
        })
        .map(|f| f.severity)
        .fold(0.0, f64::max)
}

fn valve_is_open(state: &PlantState, valve_id: &Option<String>) -> bool {
    valve_id.as_ref().map_or(true, |id| state.is_open(id))
}

/// Flows resulting from the current actuator configuration and active
/// faults, evaluated on the pre-step state.
///
/// - Inlet pipe with open valve: conductance, attenuated by clogging.
/// - Pumped transfer: `q_max * power * (1 - s_deg) * (1 - s_clog)` split
///   equally over the feed tanks whose outlet valves are open and whose
///   level is positive; zero when no source is available.
/// - Drain pipe with open valve and positive source level: conductance.
/// - Leakage per tank: `c_leak * s * sqrt(max(level, 0))`.
pub fn compute_flows(state: &PlantState, topology: &PlantTopology) -> FlowSample {
    let mut flows = FlowSample::default();
    for pipe in &topology.pipes {
        if pipe.pumped {
            continue;
        }
        let open = valve_is_open(state, &pipe.valve_id);
        let conductance = pipe
            .valve_id
            .as_ref()
            .and_then(|id| topology.valve(id))
            .map(|v| v.conductance)
            .unwrap_or(0.0);
        let source_has_liquid = match &pipe.source {
            Endpoint::Tank(id) => state.level(id) > 0.0,
            Endpoint::Supply => true,
            // Manifold-out pipes carry pump-driven flow only; handled below.
            Endpoint::Manifold | Endpoint::Drain => false,
        };
        // Feed-tank outlets connect to the manifold and carry liquid only
        // while the pump draws on them.
        let gravity_driven = pipe.sink != Endpoint::Manifold;
        let q = if open && source_has_liquid && gravity_driven {
            conductance * (1.0 - clog_severity(state, &pipe.id))
        } else {
            0.0
        };
        flows.pipe_flows.insert(pipe.id.clone(), q);
    }

    // Pumped transfer from the open feed tanks into B204.
    let transfer_pipe = topology.transfer_pipe();
    let transfer_open = valve_is_open(state, &transfer_pipe.valve_id);
    let mut transfer_total = 0.0;
    if transfer_open && state.pump_power > 0.0 {
        let sources: Vec<_> = topology
            .feed_tanks()
            .into_iter()
            .filter(|(tank, outlet)| {
                valve_is_open(state, &outlet.valve_id) && state.level(&tank.id) > 0.0
            })
            .collect();
        if !sources.is_empty() {
            let q_pump = topology.pump.q_max
                * state.pump_power
                * (1.0 - degradation_severity(state))
                * (1.0 - clog_severity(state, &transfer_pipe.id));
            let share = q_pump / sources.len() as f64;
            for (tank, outlet) in &sources {
                let q = share * (1.0 - clog_severity(state, &outlet.id));
                flows.pipe_flows.insert(outlet.id.clone(), q);
                transfer_total += q;
                let _ = tank;
            }
        }
    }
    flows
        .pipe_flows
        .insert(transfer_pipe.id.clone(), transfer_total);

    for tank in &topology.tanks {
        let s = leak_severity(state, &tank.id);
        let q_leak = if s > 0.0 {
            topology.leak_coefficient * s * state.level(&tank.id).max(0.0).sqrt()
        } else {
            0.0
        };
        flows.leakage.insert(tank.id.clone(), q_leak);
    }
    flows
}

/// Advances the plant by one explicit Euler step and reports the flows
/// that drove it. Pure: identical inputs give bit-identical outputs.
pub fn step_detailed(
    state: &PlantState,
    topology: &PlantTopology,
    dt: f64,
) -> Result<StepOutcome, StepError> {
    if dt <= 0.0 {
        return Err(StepError::InvalidTimestep(dt));
    }
    if !state.matches_topology(topology) {
        return Err(StepError::TopologyMismatch);
    }
    let flows = compute_flows(state, topology);
    let mut next = state.clone();
    let mut clamped = false;
    for tank in &topology.tanks {
        let mut net = 0.0;
        for pipe in &topology.pipes {
            let q = flows.pipe(&pipe.id);
            if pipe.sink == Endpoint::Tank(tank.id.clone()) {
                net += q;
            }
            if pipe.source == Endpoint::Tank(tank.id.clone()) {
                net -= q;
            }
        }
        net -= flows.leakage.get(&tank.id).copied().unwrap_or(0.0);
        let raw = state.level(&tank.id) + net * dt / tank.area;
        let level = if raw > tank.h_max {
            clamped = true;
            next.overflowed.insert(tank.id.clone());
            tank.h_max
        } else if raw < 0.0 {
            clamped = true;
            0.0
        } else {
            raw
        };
        next.levels.insert(tank.id.clone(), level);
    }
    next.time += dt;
    Ok(StepOutcome {
        state: next,
        flows,
        clamped,
    })
}

/// Convenience wrapper around [`step_detailed`] returning only the state.
pub fn step(
    state: &PlantState,
    topology: &PlantTopology,
    dt: f64,
) -> Result<PlantState, StepError> {
    step_detailed(state, topology, dt).map(|o| o.state)
}
