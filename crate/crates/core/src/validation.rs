//! Rule engine checking proposals for structural validity and, via twin
//! prediction, for safety before anything reaches the plant. Violations
//! are data, not errors: the verdict aggregates every violation instead
//! of failing fast.

use serde::{Deserialize, Serialize};

use crate::agents::ActionProposal;
use crate::plant::{Command, PlantState};
use crate::twin::{DigitalTwin, TwinPrediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCode {
    UnknownActuator,
    PumpPowerOutOfBounds,
    ConflictingActions,
    PredictedOverflow,
    NoProgress,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::UnknownActuator => "UnknownActuator",
            ViolationCode::PumpPowerOutOfBounds => "PumpPowerOutOfBounds",
            ViolationCode::ConflictingActions => "ConflictingActions",
            ViolationCode::PredictedOverflow => "PredictedOverflow",
            ViolationCode::NoProgress => "NoProgress",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationViolation {
    pub code: ViolationCode,
    pub detail: String,
    /// Offending actuator, or the offending tank for PredictedOverflow.
    pub actuator: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub overflow: f64,
    pub energy: f64,
    pub action_count: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            overflow: 1.0,
            energy: 1.0,
            action_count: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// Twin prediction horizon in s; must be a multiple of the loop dt.
    pub horizon: f64,
    /// Optional check that the collection tank level rises while a
    /// transfer configuration is commanded. Off by default.
    pub no_progress_check: bool,
    pub cost_weights: CostWeights,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            horizon: 20.0,
            no_progress_check: false,
            cost_weights: CostWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub valid: bool,
    pub violations: Vec<ValidationViolation>,
    pub prediction: TwinPrediction,
    /// Logged suitability scalar (overflow margin, pump energy, action
    /// count); never part of the valid/invalid gate.
    pub cost: f64,
}

fn structural_violations(
    proposal: &ActionProposal,
    twin: &DigitalTwin,
) -> Vec<ValidationViolation> {
    let topology = twin.topology();
    let mut violations = Vec::new();
    let mut seen: Vec<&str> = Vec::new();
    for action in &proposal.actions {
        match &action.command {
            Command::Open | Command::Close => {
                if !topology
                    .valves
                    .iter()
                    .any(|v| v.id.eq_ignore_ascii_case(&action.actuator))
                {
                    violations.push(ValidationViolation {
                        code: ViolationCode::UnknownActuator,
                        detail: format!("unknown actuator {}", action.actuator),
                        actuator: Some(action.actuator.clone()),
                    });
                }
            }
            Command::SetPower(power) => {
                if !topology.pump.id.eq_ignore_ascii_case(&action.actuator) {
                    violations.push(ValidationViolation {
                        code: ViolationCode::UnknownActuator,
                        detail: format!("{} does not accept set_power", action.actuator),
                        actuator: Some(action.actuator.clone()),
                    });
                } else if !(0.0..=1.0).contains(power) {
                    violations.push(ValidationViolation {
                        code: ViolationCode::PumpPowerOutOfBounds,
                        detail: format!("pump power {power} outside [0, 1]"),
                        actuator: Some(action.actuator.clone()),
                    });
                }
            }
        }
        if seen.iter().any(|s| s.eq_ignore_ascii_case(&action.actuator)) {
            violations.push(ValidationViolation {
                code: ViolationCode::ConflictingActions,
                detail: format!(
                    "two commands for actuator {} in one action list",
                    action.actuator
                ),
                actuator: Some(action.actuator.clone()),
            });
        }
        seen.push(&action.actuator);
    }
    violations
}

fn transfer_commanded(proposal: &ActionProposal, state: &PlantState, twin: &DigitalTwin) -> bool {
    let transfer_valve = twin
        .topology()
        .transfer_pipe()
        .valve_id
        .clone()
        .unwrap_or_default();
    let mut open = state.is_open(&transfer_valve);
    let mut power = state.pump_power;
    for action in &proposal.actions {
        match &action.command {
            Command::Open if action.actuator.eq_ignore_ascii_case(&transfer_valve) => open = true,
            Command::Close if action.actuator.eq_ignore_ascii_case(&transfer_valve) => open = false,
            Command::SetPower(p) => power = *p,
            _ => {}
        }
    }
    open && power > 0.0
}

fn prediction_cost(prediction: &TwinPrediction, weights: &CostWeights, twin: &DigitalTwin) -> f64 {
    let dt = if prediction.trajectory.len() > 1 {
        prediction.horizon / (prediction.trajectory.len() - 1) as f64
    } else {
        0.0
    };
    let mut overflow_margin: f64 = 0.0;
    let mut energy = 0.0;
    for state in &prediction.trajectory {
        for tank in &twin.topology().tanks {
            let excess = (state.level(&tank.id) - tank.level_high_threshold).max(0.0);
            overflow_margin = overflow_margin.max(excess / (tank.h_max - tank.level_high_threshold));
        }
        energy += state.pump_power * state.pump_power * dt;
    }
    weights.overflow * overflow_margin
        + weights.energy * energy
        + weights.action_count * prediction.triggering_actions.len() as f64
}

/// Checks, in order: actuator existence, pump power bounds, conflicting
/// duplicates, then twin-predicted overflow (and, when enabled, lack of
/// transfer progress). Structurally broken proposals are judged against
/// a no-op prediction since they cannot be simulated.
pub fn validate(
    proposal: &ActionProposal,
    state: &PlantState,
    twin: &DigitalTwin,
    rules: &RuleConfig,
) -> ValidationVerdict {
    let mut violations = structural_violations(proposal, twin);
    let actions: &[crate::plant::Action] = if violations.is_empty() {
        &proposal.actions
    } else {
        &[]
    };
    let prediction = twin
        .predict(actions, rules.horizon)
        .expect("structurally checked actions simulate");

    if violations.is_empty() {
        let overflow_tanks: std::collections::BTreeSet<String> = prediction
            .trajectory
            .iter()
            .flat_map(|s| s.overflowed.iter().cloned())
            .filter(|t| !state.overflowed.contains(t))
            .collect();
        for tank_id in overflow_tanks {
            violations.push(ValidationViolation {
                code: ViolationCode::PredictedOverflow,
                detail: format!("tank {tank_id} is predicted to overflow within the horizon"),
                actuator: Some(tank_id),
            });
        }
        if rules.no_progress_check && transfer_commanded(proposal, state, twin) {
            let start = prediction.trajectory[0].level("B204");
            let end = prediction.last().level("B204");
            if end <= start {
                violations.push(ValidationViolation {
                    code: ViolationCode::NoProgress,
                    detail: "B204 level does not rise under the commanded transfer".into(),
                    actuator: None,
                });
            }
        }
    }

    let cost = prediction_cost(&prediction, &rules.cost_weights, twin);
    ValidationVerdict {
        valid: violations.is_empty(),
        violations,
        prediction,
        cost,
    }
}
