use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::plant::PlantState;
use crate::prompt::{estimate_tokens, PromptBundle};

use super::{parse_actions, ActionProposal, Backend, BackendError};

/// Environment variable holding the API credential for the remote backend.
pub const API_KEY_ENV: &str = "AGENT_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_timeout_s() -> u64 {
    60
}

/// Chat-completions-compatible backend. One single-turn request per
/// proposal, temperature pinned to 0.
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, api_key: String) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(RemoteBackend {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }
}

/// The prompt's agent description becomes the system message; everything
/// after it (plant description, expected output, any validation
/// feedback) is the user message.
pub fn build_request_body(prompt: &PromptBundle, model: &str) -> Value {
    let user = prompt
        .rendered_text
        .strip_prefix(&prompt.agent_description)
        .unwrap_or(&prompt.rendered_text)
        .trim_start_matches(['\n', '-'])
        .trim_start()
        .to_string();
    json!({
        "model": model,
        "messages": [
            {"role": "system", "content": prompt.agent_description},
            {"role": "user", "content": user},
        ],
        "temperature": 0,
    })
}

/// Extracts the completion text and, when present, provider-reported
/// token usage from a chat-completions response.
pub fn parse_response(body: &Value) -> Result<(String, Option<(usize, usize)>), BackendError> {
    let content = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("response has no message content".into()))?
        .to_string();
    let usage = body.pointer("/usage/prompt_tokens").and_then(Value::as_u64).zip(
        body.pointer("/usage/completion_tokens")
            .and_then(Value::as_u64),
    );
    Ok((content, usage.map(|(p, c)| (p as usize, c as usize))))
}

impl Backend for RemoteBackend {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn propose(
        &mut self,
        prompt: &PromptBundle,
        _state: &PlantState,
    ) -> Result<ActionProposal, BackendError> {
        let body = build_request_body(prompt, &self.config.model);
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Protocol(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Protocol(format!(
                "backend returned HTTP {status}"
            )));
        }
        let body: Value = response
            .json()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        let (content, usage) = parse_response(&body)?;
        let actions = parse_actions(&content)?;
        let (prompt_tokens, completion_tokens) =
            usage.unwrap_or((prompt.token_estimate, estimate_tokens(&content)));
        Ok(ActionProposal {
            actions,
            rationale: content,
            prompt_tokens,
            completion_tokens,
            backend_id: self.config.model.clone(),
        })
    }
}
