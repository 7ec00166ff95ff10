//! Shadow replica of the plant. Predictions run the exact same
//! integrator as the plant itself, so a twin in mirror mode reproduces
//! the plant evolution bit-for-bit. The twin also carries the structured
//! knowledge base (topology, function, behavior) consumed by the prompt
//! engine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{
    apply_actions, step_detailed, Action, ActionError, Command, PlantState, PlantTopology,
    SensorKind, StepError,
};

/// Pump power used by the canonical control sequence during transfers.
pub const TRANSFER_PUMP_POWER: f64 = 0.5;

/// Guard on a discrete level sensor: the step is left once the sensor
/// reads `value`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub sensor_id: String,
    pub value: bool,
}

/// One step of the control sequence: entry actions applied on entering,
/// exit guard deciding when to move on. A step without a guard is left
/// immediately at the next decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDef {
    pub index: usize,
    pub name: String,
    pub entry_actions: Vec<Action>,
    pub exit_guard: Option<Guard>,
}

/// The 9-step control sequence of the mixing module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMachine {
    pub steps: Vec<StepDef>,
}

impl StateMachine {
    /// Canonical sequence: fill and transfer each feed tank in order,
    /// settle, drain the collection tank, done.
    pub fn mixing_sequence() -> Self {
        let mut steps = Vec::new();
        let mut push = |name: &str, entry: Vec<Action>, guard: Option<Guard>| {
            steps.push(StepDef {
                index: steps.len() + 1,
                name: name.to_string(),
                entry_actions: entry,
                exit_guard: guard,
            });
        };
        let high = |tank: &str| {
            Some(Guard {
                sensor_id: format!("sensor_discrete_tank_{tank}_high"),
                value: true,
            })
        };
        let low = |tank: &str| {
            Some(Guard {
                sensor_id: format!("sensor_discrete_tank_{tank}_low"),
                value: true,
            })
        };
        push("fill_B201", vec![Action::open("valve_in0")], high("B201"));
        push(
            "transfer_B201",
            vec![
                Action::close("valve_in0"),
                Action::open("valve_B201_out"),
                Action::open("valve_transfer"),
                Action::set_power("pump_P101", TRANSFER_PUMP_POWER),
            ],
            low("B201"),
        );
        push(
            "fill_B202",
            vec![
                Action::close("valve_B201_out"),
                Action::close("valve_transfer"),
                Action::set_power("pump_P101", 0.0),
                Action::open("valve_in1"),
            ],
            high("B202"),
        );
        push(
            "transfer_B202",
            vec![
                Action::close("valve_in1"),
                Action::open("valve_B202_out"),
                Action::open("valve_transfer"),
                Action::set_power("pump_P101", TRANSFER_PUMP_POWER),
            ],
            low("B202"),
        );
        push(
            "fill_B203",
            vec![
                Action::close("valve_B202_out"),
                Action::close("valve_transfer"),
                Action::set_power("pump_P101", 0.0),
                Action::open("valve_in2"),
            ],
            high("B203"),
        );
        push(
            "transfer_B203",
            vec![
                Action::close("valve_in2"),
                Action::open("valve_B203_out"),
                Action::open("valve_transfer"),
                Action::set_power("pump_P101", TRANSFER_PUMP_POWER),
            ],
            low("B203"),
        );
        push(
            "settle",
            vec![
                Action::close("valve_B203_out"),
                Action::close("valve_transfer"),
                Action::set_power("pump_P101", 0.0),
            ],
            None,
        );
        push("drain_B204", vec![Action::open("valve_B204_out")], low("B204"));
        push("complete", vec![Action::close("valve_B204_out")], None);
        StateMachine { steps }
    }

    pub fn step(&self, index: usize) -> Option<&StepDef> {
        self.steps.iter().find(|s| s.index == index)
    }
}

/// Structured plant knowledge: topology (structure), process purpose
/// (function) and the control sequence (behavior).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub topology: PlantTopology,
    pub function_text: String,
    pub behavior_machine: StateMachine,
}

impl KnowledgeBase {
    pub fn validate(&self) -> Result<(), TwinError> {
        self.topology
            .validate()
            .map_err(|e| TwinError::InvalidKnowledgeBase(e.to_string()))?;
        for step in &self.behavior_machine.steps {
            if let Some(guard) = &step.exit_guard {
                let known = self.topology.sensors.iter().any(|s| {
                    s.id == guard.sensor_id
                        && matches!(
                            s.kind,
                            SensorKind::DiscreteLevelHigh { .. } | SensorKind::DiscreteLevelLow { .. }
                        )
                });
                if !known {
                    return Err(TwinError::InvalidKnowledgeBase(format!(
                        "step {} guards unknown sensor {}",
                        step.name, guard.sensor_id
                    )));
                }
            }
            for action in &step.entry_actions {
                let known = match action.command {
                    Command::SetPower(_) => self.topology.pump.id == action.actuator,
                    _ => self.topology.valve(&action.actuator).is_some(),
                };
                if !known {
                    return Err(TwinError::InvalidKnowledgeBase(format!(
                        "step {} actuates unknown actuator {}",
                        step.name, action.actuator
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        KnowledgeBase {
            topology: PlantTopology::default(),
            function_text: "Mixing of three liquids, sequentially transferred from tanks B201, \
                            B202, and B203 into tank B204."
                .to_string(),
            behavior_machine: StateMachine::mixing_sequence(),
        }
    }
}

/// What the twin assumes about the plant's fault configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    /// Twin shares the plant's ground-truth fault configuration.
    Mirror,
    /// Twin simulates fault-free; validation then tests robustness of
    /// proposals against the nominal model.
    Blind,
}

/// Time-ordered forward simulation of a candidate action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinPrediction {
    /// Post-action states, one per dt; the first entry is the base state
    /// with the actions applied (zero-horizon prediction).
    pub trajectory: Vec<PlantState>,
    pub horizon: f64,
    pub triggering_actions: Vec<Action>,
}

impl TwinPrediction {
    pub fn last(&self) -> &PlantState {
        self.trajectory.last().expect("trajectory is non-empty")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TwinError {
    #[error("plant state does not match twin topology")]
    TopologyMismatch,
    #[error("horizon {0} is negative or not a multiple of dt")]
    InvalidHorizon(f64),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("invalid knowledge base: {0}")]
    InvalidKnowledgeBase(String),
}

/// Shadow simulation of the plant.
#[derive(Debug, Clone)]
pub struct DigitalTwin {
    kb: KnowledgeBase,
    base_state: PlantState,
    fault_mode: FaultMode,
    dt: f64,
}

impl DigitalTwin {
    pub fn new(kb: KnowledgeBase, base_state: PlantState, fault_mode: FaultMode, dt: f64) -> Self {
        DigitalTwin {
            kb,
            base_state,
            fault_mode,
            dt,
        }
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn topology(&self) -> &PlantTopology {
        &self.kb.topology
    }

    pub fn base_state(&self) -> &PlantState {
        &self.base_state
    }

    pub fn fault_mode(&self) -> FaultMode {
        self.fault_mode
    }

    /// Replaces the twin's base state with the given plant snapshot.
    /// Idempotent for identical snapshots.
    pub fn sync(&mut self, plant_state: &PlantState) -> Result<(), TwinError> {
        if !plant_state.matches_topology(&self.kb.topology) {
            return Err(TwinError::TopologyMismatch);
        }
        self.base_state = plant_state.clone();
        Ok(())
    }

    /// Applies the candidate actions to a copy of the base state and
    /// simulates `horizon / dt` steps forward. Never mutates the twin.
    pub fn predict(&self, actions: &[Action], horizon: f64) -> Result<TwinPrediction, TwinError> {
        let steps = if horizon == 0.0 {
            0
        } else {
            if horizon < 0.0 {
                return Err(TwinError::InvalidHorizon(horizon));
            }
            let ratio = horizon / self.dt;
            let steps = ratio.round();
            if (ratio - steps).abs() > 1e-9 {
                return Err(TwinError::InvalidHorizon(horizon));
            }
            steps as usize
        };
        let mut current = self.base_state.clone();
        if self.fault_mode == FaultMode::Blind {
            current.active_faults.clear();
        }
        current = apply_actions(&current, &self.kb.topology, actions)?;
        let mut trajectory = vec![current.clone()];
        for _ in 0..steps {
            current = step_detailed(&current, &self.kb.topology, self.dt)?.state;
            trajectory.push(current.clone());
        }
        Ok(TwinPrediction {
            trajectory,
            horizon,
            triggering_actions: actions.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::step;

    fn twin() -> DigitalTwin {
        let kb = KnowledgeBase::default();
        let state = PlantState::initial(&kb.topology);
        DigitalTwin::new(kb, state, FaultMode::Mirror, 0.1)
    }

    #[test]
    fn default_kb_is_valid() {
        KnowledgeBase::default().validate().unwrap();
        assert_eq!(StateMachine::mixing_sequence().steps.len(), 9);
    }

    #[test]
    fn noop_single_step_keeps_levels() {
        let t = twin();
        let p = t.predict(&[], 0.1).unwrap();
        assert_eq!(p.trajectory.len(), 2);
        assert_eq!(p.last().levels, t.base_state().levels);
    }

    #[test]
    fn zero_horizon_returns_post_action_state() {
        let t = twin();
        let p = t.predict(&[], 0.0).unwrap();
        assert_eq!(p.trajectory.len(), 1);
        assert_eq!(&p.trajectory[0], t.base_state());
    }

    #[test]
    fn prediction_matches_plant_run_exactly() {
        let t = twin();
        let actions = [Action::open("valve_in0")];
        let p = t.predict(&actions, 10.0).unwrap();

        // Independent route: run the plant directly with the same inputs.
        let mut direct =
            apply_actions(t.base_state(), t.topology(), &actions).unwrap();
        for predicted in &p.trajectory[1..] {
            direct = step(&direct, t.topology(), 0.1).unwrap();
            assert_eq!(&direct, predicted);
        }
    }

    #[test]
    fn prediction_flags_imminent_overflow() {
        let mut t = twin();
        let mut near_full = t.base_state().clone();
        near_full.levels.insert("B201".into(), 0.24);
        t.sync(&near_full).unwrap();
        let p = t.predict(&[Action::open("valve_in0")], 20.0).unwrap();
        // Fill rate is 0.01 m/s, so h_max = 0.3 is exceeded after ~6 s.
        assert!(p.last().overflowed.contains("B201"));
        assert_eq!(p.last().level("B201"), 0.3);
    }

    #[test]
    fn sync_is_idempotent_and_predict_is_pure() {
        let mut t = twin();
        let mut s = t.base_state().clone();
        s.levels.insert("B201".into(), 0.020);
        t.sync(&s).unwrap();
        t.sync(&s).unwrap();
        assert_eq!(t.base_state().level("B201"), 0.020);
        let before = t.base_state().clone();
        let _ = t.predict(&[Action::open("valve_in0")], 5.0).unwrap();
        assert_eq!(t.base_state(), &before);
    }

    #[test]
    fn sync_rejects_mismatched_state() {
        let mut t = twin();
        let mut s = t.base_state().clone();
        s.levels.remove("B203");
        assert_eq!(t.sync(&s), Err(TwinError::TopologyMismatch));
    }

    #[test]
    fn blind_mode_ignores_faults() {
        let kb = KnowledgeBase::default();
        let mut state = PlantState::initial(&kb.topology);
        state.levels.insert("B201".into(), 0.2);
        state.valve_open.insert("valve_B201_out".into(), true);
        state.valve_open.insert("valve_transfer".into(), true);
        state.pump_power = 1.0;
        state.active_faults.push(crate::plant::FaultConfig {
            kind: crate::plant::FaultKind::Clogging,
            severity: 1.0,
            location: "pipe_transfer".into(),
            onset_time: 0.0,
        });
        let blind = DigitalTwin::new(kb.clone(), state.clone(), FaultMode::Blind, 0.1);
        let mirror = DigitalTwin::new(kb, state, FaultMode::Mirror, 0.1);
        let pb = blind.predict(&[], 1.0).unwrap();
        let pm = mirror.predict(&[], 1.0).unwrap();
        assert!(pb.last().level("B204") > 0.0);
        assert_eq!(pm.last().level("B204"), 0.0);
    }

    #[test]
    fn horizon_additivity() {
        let t = twin();
        let actions = [Action::open("valve_in1")];
        let short = t.predict(&actions, 5.0).unwrap();
        let long = t.predict(&actions, 10.0).unwrap();
        assert_eq!(&long.trajectory[..short.trajectory.len()], &short.trajectory[..]);
    }

    #[test]
    fn invalid_horizon_rejected() {
        let t = twin();
        assert!(matches!(
            t.predict(&[], 0.25),
            Err(TwinError::InvalidHorizon(_))
        ));
        assert!(matches!(
            t.predict(&[], -1.0),
            Err(TwinError::InvalidHorizon(_))
        ));
    }
}
