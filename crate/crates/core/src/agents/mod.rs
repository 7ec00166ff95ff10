//! Decision backends proposing corrective control actions. All backends
//! share one interface, so the control loop is agnostic to whether a
//! deterministic sequence controller, a scripted replay or a remote
//! model is driving the plant.

mod oracle;
mod parser;
mod remote;
mod scripted;

pub use oracle::OracleBackend;
pub use parser::{format_actions, parse_actions};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV};
pub use scripted::ScriptedBackend;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{Action, PlantState};
use crate::prompt::{self, PromptBundle};
use crate::validation::ValidationViolation;

/// A backend's answer for one decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub actions: Vec<Action>,
    /// Chain-of-thought summary as reported by the backend.
    pub rationale: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub backend_id: String,
}

impl ActionProposal {
    /// Proposal with no actions, used when a backend attempt failed and
    /// the reprompt budget is exhausted.
    pub fn empty(backend_id: &str, rationale: String) -> Self {
        ActionProposal {
            actions: Vec::new(),
            rationale,
            prompt_tokens: 0,
            completion_tokens: 0,
            backend_id: backend_id.to_string(),
        }
    }
}

/// Feedback handed to a backend when its previous proposal was rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepromptContext {
    pub prior_proposal: ActionProposal,
    pub violations: Vec<ValidationViolation>,
    /// One-line summary of the twin trajectory the validator saw.
    pub twin_feedback: String,
    /// 1-based reprompt attempt counter, bounded by the loop's max_itr.
    pub attempt_index: usize,
}

impl RepromptContext {
    pub fn feedback_lines(&self) -> Vec<String> {
        let mut lines = vec![format!(
            "attempt {}: the previous action list was rejected",
            self.attempt_index
        )];
        if self.violations.is_empty() {
            lines.push(format!(
                "previous response was unusable: {}",
                self.prior_proposal.rationale
            ));
        }
        for v in &self.violations {
            lines.push(format!("violation {}: {}", v.code.as_str(), v.detail));
        }
        lines.push(format!("twin prediction: {}", self.twin_feedback));
        lines.push("propose a corrected action list in the same format".to_string());
        lines
    }
}

/// Recoverable backend failures; the loop treats each as an invalid
/// proposal and reprompts.
#[derive(Debug, Error, PartialEq)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("unparseable response: {0}")]
    Unparseable(String),
}

pub trait Backend {
    fn id(&self) -> &str;
    fn propose(
        &mut self,
        prompt: &PromptBundle,
        state: &PlantState,
    ) -> Result<ActionProposal, BackendError>;
}

/// One refinement iteration: extend the original prompt with a
/// [Validation Feedback] subsection and request a fresh proposal.
pub fn reprompt(
    backend: &mut dyn Backend,
    ctx: &RepromptContext,
    prompt: &PromptBundle,
    state: &PlantState,
) -> Result<ActionProposal, BackendError> {
    let extended = prompt::with_feedback(prompt, &ctx.feedback_lines());
    backend.propose(&extended, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::{ValidationViolation, ViolationCode};

    #[test]
    fn feedback_lines_carry_violation_details() {
        let ctx = RepromptContext {
            prior_proposal: ActionProposal::empty("test", "n/a".into()),
            violations: vec![ValidationViolation {
                code: ViolationCode::UnknownActuator,
                detail: "unknown actuator valve_x9".into(),
                actuator: Some("valve_x9".into()),
            }],
            twin_feedback: "B204 0.000m -> 0.000m over 20s".into(),
            attempt_index: 1,
        };
        let joined = ctx.feedback_lines().join("\n");
        assert!(joined.contains("valve_x9"));
        assert!(joined.contains("UnknownActuator"));
    }
}
