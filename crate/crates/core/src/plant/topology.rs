use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tank identifiers of the mixing module. B201..B203 are feed tanks,
/// B204 is the collection tank.
pub const TANK_IDS: [&str; 4] = ["B201", "B202", "B203", "B204"];

/// The eight controllable valves.
pub const VALVE_IDS: [&str; 8] = [
    "valve_in0",
    "valve_in1",
    "valve_in2",
    "valve_B201_out",
    "valve_B202_out",
    "valve_B203_out",
    "valve_transfer",
    "valve_B204_out",
];

/// The single central pump.
pub const PUMP_ID: &str = "pump_P101";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TankSpec {
    pub id: String,
    /// Cross-section in m².
    pub area: f64,
    /// Maximum level in m; reaching it clamps and flags an overflow.
    pub h_max: f64,
    pub level_high_threshold: f64,
    pub level_low_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValveSpec {
    pub id: String,
    /// Volume flow in m³/s when fully open.
    pub conductance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub id: String,
    /// Volume flow in m³/s at power 1.0.
    pub q_max: f64,
}

/// One end of a pipe. `Supply` and `Drain` are plant boundaries; the
/// `Manifold` joins the feed-tank outlets to the pumped transfer line
/// and holds no volume of its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Supply,
    Drain,
    Manifold,
    Tank(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeSpec {
    pub id: String,
    pub source: Endpoint,
    pub sink: Endpoint,
    pub valve_id: Option<String>,
    /// Pumped pipes move liquid only while the pump runs.
    pub pumped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    DiscreteLevelHigh { tank: String },
    DiscreteLevelLow { tank: String },
    Pressure { tank: String },
    VolumeFlowRate { pipe: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub id: String,
    pub kind: SensorKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("expected exactly 4 tanks named {TANK_IDS:?}, got {0:?}")]
    BadTanks(Vec<String>),
    #[error("expected exactly 8 valves named {VALVE_IDS:?}, got {0:?}")]
    BadValves(Vec<String>),
    #[error("expected pump id {PUMP_ID}, got {0}")]
    BadPump(String),
    #[error("tank {0}: non-positive area or inconsistent level thresholds")]
    BadTankGeometry(String),
    #[error("valve {0}: conductance must be > 0")]
    BadConductance(String),
    #[error("pump q_max must be > 0")]
    BadQMax,
    #[error("leak coefficient must be > 0")]
    BadLeakCoefficient,
    #[error("pipe {0} references unknown endpoint or valve")]
    DanglingPipe(String),
    #[error("sensor {0} references unknown tank or pipe")]
    DanglingSensor(String),
}

/// Static description of the mixing module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantTopology {
    pub tanks: Vec<TankSpec>,
    pub valves: Vec<ValveSpec>,
    pub pump: PumpSpec,
    pub pipes: Vec<PipeSpec>,
    pub sensors: Vec<SensorSpec>,
    /// Leakage coefficient in m^2.5/s; scales the Torricelli-style leak law.
    pub leak_coefficient: f64,
}

impl PlantTopology {
    pub fn tank(&self, id: &str) -> Option<&TankSpec> {
        self.tanks.iter().find(|t| t.id == id)
    }

    pub fn valve(&self, id: &str) -> Option<&ValveSpec> {
        self.valves.iter().find(|v| v.id == id)
    }

    pub fn pipe(&self, id: &str) -> Option<&PipeSpec> {
        self.pipes.iter().find(|p| p.id == id)
    }

    /// The pumped transfer pipe (manifold to B204).
    pub fn transfer_pipe(&self) -> &PipeSpec {
        self.pipes
            .iter()
            .find(|p| p.pumped)
            .expect("validated topology has a pumped pipe")
    }

    /// Feed tanks in process order together with their outlet pipes.
    pub fn feed_tanks(&self) -> Vec<(&TankSpec, &PipeSpec)> {
        self.tanks
            .iter()
            .filter(|t| t.id != "B204")
            .filter_map(|t| {
                self.pipes
                    .iter()
                    .find(|p| p.source == Endpoint::Tank(t.id.clone()) && p.sink == Endpoint::Manifold)
                    .map(|p| (t, p))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let tank_ids: Vec<String> = self.tanks.iter().map(|t| t.id.clone()).collect();
        if tank_ids != TANK_IDS {
            return Err(TopologyError::BadTanks(tank_ids));
        }
        let valve_ids: Vec<String> = self.valves.iter().map(|v| v.id.clone()).collect();
        if valve_ids != VALVE_IDS {
            return Err(TopologyError::BadValves(valve_ids));
        }
        if self.pump.id != PUMP_ID {
            return Err(TopologyError::BadPump(self.pump.id.clone()));
        }
        if self.pump.q_max <= 0.0 {
            return Err(TopologyError::BadQMax);
        }
        if self.leak_coefficient <= 0.0 {
            return Err(TopologyError::BadLeakCoefficient);
        }
        for t in &self.tanks {
            let ok = t.area > 0.0
                && t.level_low_threshold > 0.0
                && t.level_low_threshold < t.level_high_threshold
                && t.level_high_threshold <= t.h_max;
            if !ok {
                return Err(TopologyError::BadTankGeometry(t.id.clone()));
            }
        }
        for v in &self.valves {
            if v.conductance <= 0.0 {
                return Err(TopologyError::BadConductance(v.id.clone()));
            }
        }
        for p in &self.pipes {
            let endpoint_ok = |e: &Endpoint| match e {
                Endpoint::Tank(id) => self.tank(id).is_some(),
                _ => true,
            };
            let valve_ok = p
                .valve_id
                .as_ref()
                .map_or(true, |id| self.valve(id).is_some());
            if !endpoint_ok(&p.source) || !endpoint_ok(&p.sink) || !valve_ok {
                return Err(TopologyError::DanglingPipe(p.id.clone()));
            }
        }
        for s in &self.sensors {
            let ok = match &s.kind {
                SensorKind::DiscreteLevelHigh { tank }
                | SensorKind::DiscreteLevelLow { tank }
                | SensorKind::Pressure { tank } => self.tank(tank).is_some(),
                SensorKind::VolumeFlowRate { pipe } => self.pipe(pipe).is_some(),
            };
            if !ok {
                return Err(TopologyError::DanglingSensor(s.id.clone()));
            }
        }
        Ok(())
    }
}

impl Default for PlantTopology {
    /// Canonical mixing-module layout: three inlet valves feeding
    /// B201..B203, three outlet valves to a common manifold, the pumped
    /// transfer line into B204 and a drain valve on B204.
    ///
    /// The collection tank B204 has four times the feed-tank area so
    /// that three full transfers fit without overflow.
    fn default() -> Self {
        let feed_tank = |id: &str| TankSpec {
            id: id.to_string(),
            area: 0.01,
            h_max: 0.3,
            level_high_threshold: 0.25,
            level_low_threshold: 0.01,
        };
        let tanks = vec![
            feed_tank("B201"),
            feed_tank("B202"),
            feed_tank("B203"),
            TankSpec {
                id: "B204".to_string(),
                area: 0.04,
                h_max: 0.3,
                level_high_threshold: 0.25,
                level_low_threshold: 0.01,
            },
        ];
        let valves = VALVE_IDS
            .iter()
            .map(|id| ValveSpec {
                id: id.to_string(),
                conductance: 1e-4,
            })
            .collect();
        let pump = PumpSpec {
            id: PUMP_ID.to_string(),
            q_max: 2e-4,
        };
        let tank = |id: &str| Endpoint::Tank(id.to_string());
        let pipes = vec![
            PipeSpec {
                id: "pipe_in0".into(),
                source: Endpoint::Supply,
                sink: tank("B201"),
                valve_id: Some("valve_in0".into()),
                pumped: false,
            },
            PipeSpec {
                id: "pipe_in1".into(),
                source: Endpoint::Supply,
                sink: tank("B202"),
                valve_id: Some("valve_in1".into()),
                pumped: false,
            },
            PipeSpec {
                id: "pipe_in2".into(),
                source: Endpoint::Supply,
                sink: tank("B203"),
                valve_id: Some("valve_in2".into()),
                pumped: false,
            },
            PipeSpec {
                id: "pipe_B201_out".into(),
                source: tank("B201"),
                sink: Endpoint::Manifold,
                valve_id: Some("valve_B201_out".into()),
                pumped: false,
            },
            PipeSpec {
                id: "pipe_B202_out".into(),
                source: tank("B202"),
                sink: Endpoint::Manifold,
                valve_id: Some("valve_B202_out".into()),
                pumped: false,
            },
            PipeSpec {
                id: "pipe_B203_out".into(),
                source: tank("B203"),
                sink: Endpoint::Manifold,
                valve_id: Some("valve_B203_out".into()),
                pumped: false,
            },
            PipeSpec {
                id: "pipe_transfer".into(),
                source: Endpoint::Manifold,
                sink: tank("B204"),
                valve_id: Some("valve_transfer".into()),
                pumped: true,
            },
            PipeSpec {
                id: "pipe_drain".into(),
                source: tank("B204"),
                sink: Endpoint::Drain,
                valve_id: Some("valve_B204_out".into()),
                pumped: false,
            },
        ];
        let mut sensors = Vec::new();
        for id in TANK_IDS {
            sensors.push(SensorSpec {
                id: format!("sensor_discrete_tank_{id}_high"),
                kind: SensorKind::DiscreteLevelHigh { tank: id.into() },
            });
            sensors.push(SensorSpec {
                id: format!("sensor_discrete_tank_{id}_low"),
                kind: SensorKind::DiscreteLevelLow { tank: id.into() },
            });
            sensors.push(SensorSpec {
                id: format!("sensor_continuous_pressure_tank_{id}"),
                kind: SensorKind::Pressure { tank: id.into() },
            });
        }
        sensors.push(SensorSpec {
            id: "sensor_continuous_volumeFlowRate".into(),
            kind: SensorKind::VolumeFlowRate {
                pipe: "pipe_transfer".into(),
            },
        });
        PlantTopology {
            tanks,
            valves,
            pump,
            pipes,
            sensors,
            leak_coefficient: 1e-4,
        }
    }
}
