//! Built-in experiment scenarios: the fault-free baseline plus the
//! standard fault injections at their canonical onset times. Fault
//! onsets are chosen to land mid-sequence (the clogging and degradation
//! cases hit during the second transfer).

use serde::{Deserialize, Serialize};

use crate::plant::{FaultConfig, FaultKind, PlantState, PlantTopology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub faults: Vec<FaultConfig>,
}

impl Scenario {
    /// Quiescent plant with the scenario's faults armed.
    pub fn initial_state(&self, topology: &PlantTopology) -> PlantState {
        let mut state = PlantState::initial(topology);
        state.active_faults = self.faults.clone();
        state
    }
}

fn clogging(severity: f64) -> Scenario {
    Scenario {
        name: format!("clogging-{severity}"),
        description: format!(
            "transfer pipe clogs to severity {severity} at t=80s, during the second transfer"
        ),
        faults: vec![FaultConfig {
            kind: FaultKind::Clogging,
            severity,
            location: "pipe_transfer".into(),
            onset_time: 80.0,
        }],
    }
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "fault-free".into(),
            description: "nominal run of the mixing sequence, no faults".into(),
            faults: Vec::new(),
        },
        clogging(0.25),
        clogging(0.5),
        clogging(0.75),
        Scenario {
            name: "leakage".into(),
            description: "tank B201 develops a severity 0.5 leak at t=5s".into(),
            faults: vec![FaultConfig {
                kind: FaultKind::Leakage,
                severity: 0.5,
                location: "B201".into(),
                onset_time: 5.0,
            }],
        },
        Scenario {
            name: "pump-degradation".into(),
            description: "pump degrades to severity 0.3 at t=80s".into(),
            faults: vec![FaultConfig {
                kind: FaultKind::PumpDegradation,
                severity: 0.3,
                location: "pump_P101".into(),
                onset_time: 80.0,
            }],
        },
    ]
}

pub fn find_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
