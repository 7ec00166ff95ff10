use crate::plant::PlantState;
use crate::prompt::{estimate_tokens, PromptBundle};

use super::{parse_actions, ActionProposal, Backend, BackendError};

/// Replays a configured sequence of raw responses; used to exercise
/// reprompt and forced-execution paths deterministically. Once the
/// script is exhausted the last response repeats.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    responses: Vec<String>,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedBackend {
            responses,
            cursor: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn propose(
        &mut self,
        prompt: &PromptBundle,
        _state: &PlantState,
    ) -> Result<ActionProposal, BackendError> {
        let response = self
            .responses
            .get(self.cursor.min(self.responses.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| BackendError::Protocol("script is empty".into()))?;
        self.cursor += 1;
        let actions = parse_actions(&response)?;
        Ok(ActionProposal {
            actions,
            rationale: format!("scripted response {}", self.cursor),
            prompt_tokens: prompt.token_estimate,
            completion_tokens: estimate_tokens(&response),
            backend_id: self.id().to_string(),
        })
    }
}
