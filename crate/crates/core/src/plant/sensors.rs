use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dynamics::compute_flows;
use super::state::PlantState;
use super::topology::{PlantTopology, SensorKind};

pub const WATER_DENSITY: f64 = 1000.0; // kg/m³
pub const GRAVITY: f64 = 9.81; // m/s²

/// Snapshot of every sensor in the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReadings {
    /// Discrete level flags, e.g. `sensor_discrete_tank_B203_high`.
    pub discrete_levels: BTreeMap<String, bool>,
    /// Hydrostatic pressures in Pa, e.g. `sensor_continuous_pressure_tank_B202`.
    pub pressures: BTreeMap<String, f64>,
    /// Current transfer-pipe flow in m³/s.
    pub volume_flow_rate: f64,
}

impl SensorReadings {
    pub fn flag(&self, sensor_id: &str) -> bool {
        self.discrete_levels.get(sensor_id).copied().unwrap_or(false)
    }
}

/// Evaluates every sensor against the current state. High/low flags
/// compare against the tank thresholds (no hysteresis); pressure is the
/// hydrostatic column rho*g*h.
pub fn read_sensors(state: &PlantState, topology: &PlantTopology) -> SensorReadings {
    let flows = compute_flows(state, topology);
    let mut readings = SensorReadings {
        discrete_levels: BTreeMap::new(),
        pressures: BTreeMap::new(),
        volume_flow_rate: 0.0,
    };
    for sensor in &topology.sensors {
        match &sensor.kind {
            SensorKind::DiscreteLevelHigh { tank } => {
                let t = topology.tank(tank).expect("validated topology");
                readings.discrete_levels.insert(
                    sensor.id.clone(),
                    state.level(tank) >= t.level_high_threshold,
                );
            }
            SensorKind::DiscreteLevelLow { tank } => {
                let t = topology.tank(tank).expect("validated topology");
                readings
                    .discrete_levels
                    .insert(sensor.id.clone(), state.level(tank) <= t.level_low_threshold);
            }
            SensorKind::Pressure { tank } => {
                readings.pressures.insert(
                    sensor.id.clone(),
                    WATER_DENSITY * GRAVITY * state.level(tank).max(0.0),
                );
            }
            SensorKind::VolumeFlowRate { pipe } => {
                readings.volume_flow_rate = flows.pipe(pipe);
            }
        }
    }
    readings
}
