//! Chat transcripts and pluggable language-model backends.
//!
//! Tactile videos never enter a transcript directly. A message refers to a
//! video through a placeholder such as `[tactile:4]`, and the transcript maps
//! each placeholder to the text description that stands in for the frames.
//! Backends see the resolved text.

mod mock;
mod prompts;
mod remote;
mod replay;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mock::{MockRules, ScriptedMock};
pub use prompts::*;
pub use remote::{RemoteBackend, RemoteConfig, ENV_KEY, ENV_MODEL, ENV_URL};
pub use replay::{Recorder, ReplayBackend, ReplayRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("message content is empty")]
    EmptyContent,
    #[error("a {found:?} message cannot follow {after}")]
    OutOfTurn { found: Role, after: String },
    #[error("placeholder `{0}` has no attachment")]
    Unresolved(String),
    #[error("placeholder `{0}` is already attached")]
    DuplicateAttachment(String),
    #[error("`{0}` is not a tactile placeholder")]
    BadPlaceholder(String),
}

const PLACEHOLDER_OPEN: &str = "[tactile:";

/// Placeholder token for a tactile attachment id, e.g. `[tactile:1.2]`.
pub fn placeholder(id: &str) -> String {
    format!("{PLACEHOLDER_OPEN}{id}]")
}

/// Placeholders in order of appearance.
pub fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(PLACEHOLDER_OPEN) {
        let tail = &rest[start..];
        match tail.find(']') {
            Some(end) => {
                out.push(&tail[..=end]);
                rest = &tail[end + 1..];
            }
            None => break,
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    messages: Vec<ChatMessage>,
    attachments: BTreeMap<String, String>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_system(text: impl Into<String>) -> Result<Self, TranscriptError> {
        let mut t = Self::new();
        t.push(ChatMessage::new(Role::System, text))?;
        Ok(t)
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn attachments(&self) -> &BTreeMap<String, String> {
        &self.attachments
    }

    pub fn last(&self) -> Option<&ChatMessage> {
        self.messages.last()
    }

    /// Registers the description behind `token`; tokens are write-once.
    pub fn attach(&mut self, token: &str, description: impl Into<String>) -> Result<(), TranscriptError> {
        if !(token.starts_with(PLACEHOLDER_OPEN) && token.ends_with(']') && placeholders(token) == [token]) {
            return Err(TranscriptError::BadPlaceholder(token.to_owned()));
        }
        if self.attachments.contains_key(token) {
            return Err(TranscriptError::DuplicateAttachment(token.to_owned()));
        }
        self.attachments.insert(token.to_owned(), description.into());
        Ok(())
    }

    /// Appends a message. System messages may only open the transcript;
    /// afterwards user and assistant turns alternate, starting with the user.
    pub fn push(&mut self, message: ChatMessage) -> Result<(), TranscriptError> {
        if message.content.trim().is_empty() {
            return Err(TranscriptError::EmptyContent);
        }
        let prev = self.messages.last().map(|m| m.role);
        let ok = match message.role {
            Role::System => prev.is_none(),
            Role::User => matches!(prev, None | Some(Role::System) | Some(Role::Assistant)),
            Role::Assistant => prev == Some(Role::User),
        };
        if !ok {
            return Err(TranscriptError::OutOfTurn {
                found: message.role,
                after: prev.map_or("the start".into(), |r| format!("a {r:?} message")),
            });
        }
        for p in placeholders(&message.content) {
            if !self.attachments.contains_key(p) {
                return Err(TranscriptError::Unresolved(p.to_owned()));
            }
        }
        self.messages.push(message);
        Ok(())
    }

    pub fn push_user(&mut self, content: impl Into<String>) -> Result<(), TranscriptError> {
        self.push(ChatMessage::new(Role::User, content))
    }

    pub fn push_assistant(&mut self, content: impl Into<String>) -> Result<(), TranscriptError> {
        self.push(ChatMessage::new(Role::Assistant, content))
    }

    /// Substitutes every placeholder with its description.
    pub fn resolve(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        for p in placeholders(text) {
            let at = rest.find(p).expect("placeholder located in order");
            out.push_str(&rest[..at]);
            out.push_str(self.attachments.get(p).map_or(p, String::as_str));
            rest = &rest[at + p.len()..];
        }
        out.push_str(rest);
        out
    }

    /// Messages as a backend sees them.
    pub fn resolved_messages(&self) -> Vec<ChatMessage> {
        self.messages
            .iter()
            .map(|m| ChatMessage::new(m.role, self.resolve(&m.content)))
            .collect()
    }

    /// Canonical request text: compact JSON of the resolved messages.
    pub fn render(&self) -> String {
        serde_json::to_string(&self.resolved_messages()).expect("messages serialize")
    }

    /// Lowercase hex SHA-256 of [`Transcript::render`].
    pub fn request_hash(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }

    /// Human-readable view with role headers, used by `show-prompts`.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        for m in self.resolved_messages() {
            let role = match m.role {
                Role::System => "SYSTEM",
                Role::User => "USER",
                Role::Assistant => "ASSISTANT",
            };
            out.push_str(&format!("[{role}]\n{}\n\n", m.content));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("transcript must end with a user message")]
    NotAwaitingReply,
    #[error("replay fixture has no response for request {hash}")]
    ReplayDivergence { hash: String },
    #[error("replay fixture: {0}")]
    Fixture(String),
    #[error("remote backend not configured: {0}")]
    NotConfigured(String),
    #[error("remote endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("remote transport failure: {0}")]
    Transport(String),
    #[error("remote response malformed: {0}")]
    BadResponse(String),
}

/// Anything that can answer a transcript ending in a user turn.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, transcript: &Transcript) -> Result<ChatMessage, LlmError>;
}

/// The three interchangeable backends.
#[derive(Debug, Clone)]
pub enum LlmBackend {
    ScriptedMock(ScriptedMock),
    Replay(ReplayBackend),
    Remote(RemoteBackend),
}

impl LlmBackend {
    pub fn name(&self) -> &'static str {
        match self {
            LlmBackend::ScriptedMock(_) => "scripted-mock",
            LlmBackend::Replay(_) => "replay",
            LlmBackend::Remote(_) => "remote",
        }
    }
}

impl LanguageModel for LlmBackend {
    fn complete(&self, transcript: &Transcript) -> Result<ChatMessage, LlmError> {
        if transcript.last().map(|m| m.role) != Some(Role::User) {
            return Err(LlmError::NotAwaitingReply);
        }
        match self {
            LlmBackend::ScriptedMock(m) => m.complete(transcript),
            LlmBackend::Replay(r) => r.complete(transcript),
            LlmBackend::Remote(r) => r.complete(transcript),
        }
    }
}

/// Completes `transcript` and appends the reply to it.
pub fn converse(model: &dyn LanguageModel, transcript: &mut Transcript) -> Result<ChatMessage, LlmError> {
    let reply = model.complete(transcript)?;
    transcript.push(reply.clone())?;
    Ok(reply)
}
