//! Chat-completions-style HTTP backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatMessage, LlmError, Role, Transcript};

pub const ENV_URL: &str = "OCTO_LLM_URL";
pub const ENV_MODEL: &str = "OCTO_LLM_MODEL";
pub const ENV_KEY: &str = "OCTO_LLM_KEY";
const DEFAULT_MODEL: &str = "default";
const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Reads `OCTO_LLM_URL` (required), `OCTO_LLM_MODEL` and `OCTO_LLM_KEY`.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let url = get(ENV_URL)
            .filter(|u| !u.is_empty())
            .ok_or_else(|| LlmError::NotConfigured(format!("{ENV_URL} is not set")))?;
        Ok(Self {
            url,
            model: get(ENV_MODEL)
                .filter(|m| !m.is_empty())
                .unwrap_or_else(|| DEFAULT_MODEL.into()),
            api_key: get(ENV_KEY).filter(|k| !k.is_empty()),
            timeout: DEFAULT_TIMEOUT,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Request body sent for `transcript`.
    pub fn request_body(&self, transcript: &Transcript) -> Value {
        json!({
            "model": self.config.model,
            "messages": transcript.resolved_messages(),
        })
    }

    pub fn complete(&self, transcript: &Transcript) -> Result<ChatMessage, LlmError> {
        let mut req = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.request_body(transcript))
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body });
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| LlmError::BadResponse(format!("{e}: {body}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| LlmError::BadResponse(format!("no choices[0].message.content in {body}")))?;
        Ok(ChatMessage::new(Role::Assistant, content))
    }
}
