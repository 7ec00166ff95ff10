use crate::control::detect_symptoms;
use crate::plant::{read_sensors, Action, Command, PlantState, SensorReadings};
use crate::prompt::{estimate_tokens, PromptBundle};
use crate::twin::KnowledgeBase;

use super::{format_actions, ActionProposal, Backend, BackendError};

/// Deterministic sequence controller standing in for an LLM operator.
/// Executes the 9-step mixing sequence and, when a clogging symptom is
/// flagged, compensates by raising the pump power to `u / (1 - s)`,
/// capped at 1. Proposals are a pure function of (state, symptom flags).
#[derive(Debug, Clone)]
pub struct OracleBackend {
    kb: KnowledgeBase,
    target_level_b204: f64,
    symptom_threshold: f64,
}

/// Feed tanks with their inlet and outlet valves, in process order.
const FEEDS: [(&str, &str, &str); 3] = [
    ("B201", "valve_in0", "valve_B201_out"),
    ("B202", "valve_in1", "valve_B202_out"),
    ("B203", "valve_in2", "valve_B203_out"),
];

impl OracleBackend {
    pub fn new(kb: KnowledgeBase, target_level_b204: f64, symptom_threshold: f64) -> Self {
        OracleBackend {
            kb,
            target_level_b204,
            symptom_threshold,
        }
    }

    fn entry_actions(&self, step_index: usize) -> Vec<Action> {
        self.kb
            .behavior_machine
            .step(step_index)
            .map(|s| s.entry_actions.clone())
            .unwrap_or_default()
    }

    fn step_name(&self, step_index: usize) -> String {
        self.kb
            .behavior_machine
            .step(step_index)
            .map(|s| s.name.clone())
            .unwrap_or_else(|| format!("step {step_index}"))
    }

    fn changes_state(state: &PlantState, action: &Action) -> bool {
        match &action.command {
            Command::Open => !state.is_open(&action.actuator),
            Command::Close => state.is_open(&action.actuator),
            Command::SetPower(p) => (p - state.pump_power).abs() > 1e-12,
        }
    }

    /// Entry actions of the step the sequence should move to, or an
    /// empty list when the current step's exit guard has not fired yet.
    fn sequence_actions(
        &self,
        state: &PlantState,
        readings: &SensorReadings,
    ) -> (Vec<Action>, String) {
        let high = |tank: &str| format!("sensor_discrete_tank_{tank}_high");
        let low = |tank: &str| format!("sensor_discrete_tank_{tank}_low");

        if state.level("B204") >= self.target_level_b204 {
            return (Vec::new(), "target level reached; nothing to do".into());
        }
        if state.is_open("valve_B204_out") {
            return if readings.flag(&low("B204")) {
                (self.entry_actions(9), "drain finished; completing".into())
            } else {
                (Vec::new(), "draining B204".into())
            };
        }
        if let Some(i) = FEEDS.iter().position(|f| state.is_open(f.1)) {
            let (tank, ..) = FEEDS[i];
            return if readings.flag(&high(tank)) {
                let next = 2 + 2 * i;
                (
                    self.entry_actions(next),
                    format!("{tank} full; entering {}", self.step_name(next)),
                )
            } else {
                (Vec::new(), format!("filling {tank}"))
            };
        }
        if let Some(i) = FEEDS.iter().position(|f| state.is_open(f.2)) {
            let (tank, ..) = FEEDS[i];
            return if readings.flag(&low(tank)) {
                let next = if i < 2 { 3 + 2 * i } else { 7 };
                (
                    self.entry_actions(next),
                    format!("{tank} empty; entering {}", self.step_name(next)),
                )
            } else {
                (Vec::new(), format!("transferring {tank} to B204"))
            };
        }
        // Quiescent plant: resume or start the sequence.
        let low_threshold = |tank: &str| {
            self.kb
                .topology
                .tank(tank)
                .map(|t| t.level_low_threshold)
                .unwrap_or(0.0)
        };
        if let Some(i) = FEEDS
            .iter()
            .position(|f| state.level(f.0) > low_threshold(f.0))
        {
            let (tank, inlet, _) = FEEDS[i];
            return if readings.flag(&high(tank)) {
                let next = 2 + 2 * i;
                (
                    self.entry_actions(next),
                    format!("{tank} already full; entering {}", self.step_name(next)),
                )
            } else {
                (
                    vec![Action::open(inlet)],
                    format!("resuming fill of {tank}"),
                )
            };
        }
        if state.level("B204") > low_threshold("B204") {
            return (self.entry_actions(8), "feeds empty; draining B204".into());
        }
        (self.entry_actions(1), "starting the sequence".into())
    }
}

impl Backend for OracleBackend {
    fn id(&self) -> &str {
        "oracle"
    }

    fn propose(
        &mut self,
        prompt: &PromptBundle,
        state: &PlantState,
    ) -> Result<ActionProposal, BackendError> {
        let topology = &self.kb.topology;
        let readings = read_sensors(state, topology);
        let symptoms = detect_symptoms(&readings, state, topology, self.symptom_threshold);

        let (mut actions, mut rationale) = self.sequence_actions(state, &readings);
        actions.retain(|a| Self::changes_state(state, a));

        // Compensate a flow deficit by inverting the linear fault model.
        let projected_power = actions
            .iter()
            .find_map(|a| match a.command {
                Command::SetPower(p) => Some(p),
                _ => None,
            })
            .unwrap_or(state.pump_power);
        let transfer_valve = topology
            .transfer_pipe()
            .valve_id
            .clone()
            .unwrap_or_default();
        let transfer_stays_open = actions
            .iter()
            .find_map(|a| match (&a.command, a.actuator == transfer_valve) {
                (Command::Open, true) => Some(true),
                (Command::Close, true) => Some(false),
                _ => None,
            })
            .unwrap_or_else(|| state.is_open(&transfer_valve));
        if transfer_stays_open && projected_power > 0.0 {
            if let Some(symptom) = symptoms.first() {
                let s_hat = symptom.severity_estimate.min(1.0 - 1e-9);
                let compensated = (projected_power / (1.0 - s_hat)).min(1.0);
                if (compensated - projected_power).abs() > 1e-9 {
                    actions.retain(|a| !matches!(a.command, Command::SetPower(_)));
                    actions.push(Action::set_power(&topology.pump.id, compensated));
                    rationale = format!(
                        "{rationale}; flow deficit (estimated severity {s_hat:.3}), \
                         raising pump power to {compensated:.3}"
                    );
                }
            }
        }

        let completion = format_actions(&actions);
        Ok(ActionProposal {
            prompt_tokens: prompt.token_estimate,
            completion_tokens: estimate_tokens(&completion),
            actions,
            rationale,
            backend_id: self.id().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{FaultConfig, FaultKind, PlantTopology};
    use crate::prompt::{render, AgentProfile, Representation};
    use crate::twin::TRANSFER_PUMP_POWER;

    fn oracle() -> OracleBackend {
        OracleBackend::new(KnowledgeBase::default(), 0.175, 0.2)
    }

    fn prompt_for(state: &PlantState) -> PromptBundle {
        render(
            &KnowledgeBase::default(),
            state,
            Representation::Text,
            &AgentProfile::default(),
        )
    }

    fn propose(state: &PlantState) -> ActionProposal {
        oracle().propose(&prompt_for(state), state).unwrap()
    }

    #[test]
    fn starts_by_opening_first_inlet() {
        let topo = PlantTopology::default();
        let state = PlantState::initial(&topo);
        assert_eq!(propose(&state).actions, vec![Action::open("valve_in0")]);
    }

    #[test]
    fn full_feed_tank_switches_to_transfer() {
        let topo = PlantTopology::default();
        let mut state = PlantState::initial(&topo);
        state.levels.insert("B201".into(), 0.25);
        state.valve_open.insert("valve_in0".into(), true);
        let actions = propose(&state).actions;
        assert_eq!(
            actions,
            vec![
                Action::close("valve_in0"),
                Action::open("valve_B201_out"),
                Action::open("valve_transfer"),
                Action::set_power("pump_P101", TRANSFER_PUMP_POWER),
            ]
        );
    }

    #[test]
    fn mid_fill_is_a_noop() {
        let topo = PlantTopology::default();
        let mut state = PlantState::initial(&topo);
        state.levels.insert("B201".into(), 0.1);
        state.valve_open.insert("valve_in0".into(), true);
        assert!(propose(&state).actions.is_empty());
    }

    #[test]
    fn target_reached_proposes_nothing() {
        let topo = PlantTopology::default();
        let mut state = PlantState::initial(&topo);
        state.levels.insert("B204".into(), 0.175);
        assert!(propose(&state).actions.is_empty());
    }

    #[test]
    fn clogging_symptom_triggers_full_compensation() {
        let topo = PlantTopology::default();
        let mut state = PlantState::initial(&topo);
        state.levels.insert("B201".into(), 0.2);
        state.valve_open.insert("valve_B201_out".into(), true);
        state.valve_open.insert("valve_transfer".into(), true);
        state.pump_power = 0.5;
        state.active_faults.push(FaultConfig {
            kind: FaultKind::Clogging,
            severity: 0.5,
            location: "pipe_transfer".into(),
            onset_time: 0.0,
        });
        let actions = propose(&state).actions;
        assert_eq!(actions.len(), 1);
        match &actions[0].command {
            Command::SetPower(p) => assert!((p - 1.0).abs() < 1e-9),
            other => panic!("expected set_power, got {other:?}"),
        }
    }

    #[test]
    fn compensation_is_capped_and_idempotent() {
        let topo = PlantTopology::default();
        let mut state = PlantState::initial(&topo);
        state.levels.insert("B201".into(), 0.2);
        state.valve_open.insert("valve_B201_out".into(), true);
        state.valve_open.insert("valve_transfer".into(), true);
        state.pump_power = 1.0;
        state.active_faults.push(FaultConfig {
            kind: FaultKind::Clogging,
            severity: 0.75,
            location: "pipe_transfer".into(),
            onset_time: 0.0,
        });
        // Already at the cap: nothing more the oracle can do.
        assert!(propose(&state).actions.is_empty());
    }

    #[test]
    fn proposals_are_deterministic() {
        let topo = PlantTopology::default();
        let mut state = PlantState::initial(&topo);
        state.levels.insert("B202".into(), 0.13);
        state.valve_open.insert("valve_in1".into(), true);
        assert_eq!(propose(&state), propose(&state));
    }
}
