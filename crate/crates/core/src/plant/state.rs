use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::fault::FaultConfig;
use super::topology::PlantTopology;

/// Full actuator/sensor/level snapshot of the plant at one simulation
/// instant. Ordered maps keep iteration (and serialization) stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Simulation time in s; monotonically non-decreasing across steps.
    pub time: f64,
    /// Tank id -> level in m.
    pub levels: BTreeMap<String, f64>,
    /// Valve id -> open flag.
    pub valve_open: BTreeMap<String, bool>,
    /// Pump power fraction in [0, 1].
    pub pump_power: f64,
    pub active_faults: Vec<FaultConfig>,
    /// Tanks that have hit their maximum level at least once.
    pub overflowed: BTreeSet<String>,
}

impl PlantState {
    /// Empty, quiescent plant: all tanks empty, all valves closed, pump off.
    pub fn initial(topology: &PlantTopology) -> Self {
        PlantState {
            time: 0.0,
            levels: topology.tanks.iter().map(|t| (t.id.clone(), 0.0)).collect(),
            valve_open: topology
                .valves
                .iter()
                .map(|v| (v.id.clone(), false))
                .collect(),
            pump_power: 0.0,
            active_faults: Vec::new(),
            overflowed: BTreeSet::new(),
        }
    }

    pub fn level(&self, tank: &str) -> f64 {
        self.levels.get(tank).copied().unwrap_or(0.0)
    }

    pub fn is_open(&self, valve: &str) -> bool {
        self.valve_open.get(valve).copied().unwrap_or(false)
    }

    /// True when every id in the state exists in the topology and vice versa.
    pub fn matches_topology(&self, topology: &PlantTopology) -> bool {
        self.levels.len() == topology.tanks.len()
            && topology.tanks.iter().all(|t| self.levels.contains_key(&t.id))
            && self.valve_open.len() == topology.valves.len()
            && topology
                .valves
                .iter()
                .all(|v| self.valve_open.contains_key(&v.id))
    }
}
