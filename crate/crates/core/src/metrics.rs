//! Scoring of executed runs against an expected action trace. Matching
//! is per decision point and order-insensitive; pump commands are judged
//! by the direction of the power change rather than the exact value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::IterationRecord;
use crate::plant::{Action, Command};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpDirection {
    Increase,
    Decrease,
    Hold,
}

impl PumpDirection {
    pub fn of_change(power_before: f64, power_after: f64) -> Self {
        if power_after > power_before + 1e-9 {
            PumpDirection::Increase
        } else if power_after < power_before - 1e-9 {
            PumpDirection::Decrease
        } else {
            PumpDirection::Hold
        }
    }
}

/// One action the reference controller would have taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedAction {
    Valve { actuator: String, command: Command },
    Pump { direction: PumpDirection },
}

/// Expected actions per decision point, in decision order.
pub type ExpectedTrace = Vec<Vec<ExpectedAction>>;

/// The slice of an iteration record the scorer needs. Kept small so
/// scores can also be reconstructed from an exported operation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    pub actions: Vec<Action>,
    pub pump_power_before: f64,
    pub reprompts: usize,
    pub tokens: usize,
}

impl From<&IterationRecord> for DecisionPoint {
    fn from(record: &IterationRecord) -> Self {
        DecisionPoint {
            actions: record.proposal.actions.clone(),
            pump_power_before: record.state_before.pump_power,
            reprompts: record.reprompt_count,
            tokens: record.prompt_tokens + record.completion_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_actions: usize,
    pub n_expected_actions: usize,
    pub n_correct: usize,
    pub n_incorrect_valve: usize,
    pub n_incorrect_pump: usize,
    pub n_missed_valve: usize,
    pub n_missed_pump: usize,
    pub n_reprompts: usize,
    pub tokens_total: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("expected trace has {expected} decision points but the run has {actual}")]
    TraceMismatch { expected: usize, actual: usize },
}

/// Derives the expected trace from a reference run: what was actually
/// executed at each decision point, with pump actions reduced to their
/// direction of change.
pub fn expected_from_records(records: &[IterationRecord]) -> ExpectedTrace {
    records
        .iter()
        .map(|r| {
            r.proposal
                .actions
                .iter()
                .map(|a| match a.command {
                    Command::SetPower(p) => ExpectedAction::Pump {
                        direction: PumpDirection::of_change(r.state_before.pump_power, p),
                    },
                    _ => ExpectedAction::Valve {
                        actuator: a.actuator.clone(),
                        command: a.command.clone(),
                    },
                })
                .collect()
        })
        .collect()
}

fn score_point(point: &DecisionPoint, expected: &[ExpectedAction], metrics: &mut RunMetrics) {
    let mut remaining: Vec<&ExpectedAction> = expected.iter().collect();
    metrics.n_actions += point.actions.len();
    metrics.n_expected_actions += expected.len();
    metrics.n_reprompts += point.reprompts;
    metrics.tokens_total += point.tokens;
    for action in &point.actions {
        match &action.command {
            Command::SetPower(p) => {
                let direction = PumpDirection::of_change(point.pump_power_before, *p);
                let hit = remaining.iter().position(
                    |e| matches!(e, ExpectedAction::Pump { direction: d } if *d == direction),
                );
                match hit {
                    Some(i) => {
                        remaining.remove(i);
                        metrics.n_correct += 1;
                    }
                    None => metrics.n_incorrect_pump += 1,
                }
            }
            command => {
                let hit = remaining.iter().position(|e| {
                    matches!(e, ExpectedAction::Valve { actuator, command: c }
                        if actuator.eq_ignore_ascii_case(&action.actuator) && c == command)
                });
                match hit {
                    Some(i) => {
                        remaining.remove(i);
                        metrics.n_correct += 1;
                    }
                    None => metrics.n_incorrect_valve += 1,
                }
            }
        }
    }
    for miss in remaining {
        match miss {
            ExpectedAction::Valve { .. } => metrics.n_missed_valve += 1,
            ExpectedAction::Pump { .. } => metrics.n_missed_pump += 1,
        }
    }
}

/// Scores a run against the expected trace. The run may contain extra
/// decision points beyond the expected trace (scored against an empty
/// expectation); the converse is a mismatch.
pub fn score(points: &[DecisionPoint], expected: &ExpectedTrace) -> Result<RunMetrics, MetricsError> {
    if expected.len() > points.len() {
        return Err(MetricsError::TraceMismatch {
            expected: expected.len(),
            actual: points.len(),
        });
    }
    let mut metrics = RunMetrics::default();
    for (i, point) in points.iter().enumerate() {
        let expected_here = expected.get(i).map(Vec::as_slice).unwrap_or(&[]);
        score_point(point, expected_here, &mut metrics);
    }
    Ok(metrics)
}

pub fn score_records(
    records: &[IterationRecord],
    expected: &ExpectedTrace,
) -> Result<RunMetrics, MetricsError> {
    let points: Vec<DecisionPoint> = records.iter().map(DecisionPoint::from).collect();
    score(&points, expected)
}
