use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::PlantState;
use super::topology::PlantTopology;

/// One actuator command in the `<actuator> - <command>` grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub actuator: String,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Open,
    Close,
    SetPower(f64),
}

impl Action {
    pub fn open(actuator: &str) -> Self {
        Action {
            actuator: actuator.to_string(),
            command: Command::Open,
        }
    }

    pub fn close(actuator: &str) -> Self {
        Action {
            actuator: actuator.to_string(),
            command: Command::Close,
        }
    }

    pub fn set_power(actuator: &str, power: f64) -> Self {
        Action {
            actuator: actuator.to_string(),
            command: Command::SetPower(power),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.command {
            Command::Open => write!(f, "{} - open", self.actuator),
            Command::Close => write!(f, "{} - close", self.actuator),
            Command::SetPower(p) => write!(f, "{} - set_power {}", self.actuator, p),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("unknown actuator {0}")]
    UnknownActuator(String),
    #[error("conflicting commands for actuator {0} in one action list")]
    ConflictingActions(String),
    #[error("pump power {0} outside [0, 1]")]
    PowerOutOfBounds(f64),
}

/// Applies valve toggles and pump power assignments; all other state is
/// untouched. Two commands on the same actuator in one list are rejected.
pub fn apply_actions(
    state: &PlantState,
    topology: &PlantTopology,
    actions: &[Action],
) -> Result<PlantState, ActionError> {
    let mut seen: Vec<&str> = Vec::new();
    let mut next = state.clone();
    for action in actions {
        if seen.iter().any(|s| s.eq_ignore_ascii_case(&action.actuator)) {
            return Err(ActionError::ConflictingActions(action.actuator.clone()));
        }
        seen.push(&action.actuator);
        match &action.command {
            Command::Open | Command::Close => {
                let valve = topology
                    .valves
                    .iter()
                    .find(|v| v.id.eq_ignore_ascii_case(&action.actuator))
                    .ok_or_else(|| ActionError::UnknownActuator(action.actuator.clone()))?;
                next.valve_open
                    .insert(valve.id.clone(), action.command == Command::Open);
            }
            Command::SetPower(power) => {
                if !topology.pump.id.eq_ignore_ascii_case(&action.actuator) {
                    return Err(ActionError::UnknownActuator(action.actuator.clone()));
                }
                if !(0.0..=1.0).contains(power) {
                    return Err(ActionError::PowerOutOfBounds(*power));
                }
                next.pump_power = *power;
            }
        }
    }
    Ok(next)
}
