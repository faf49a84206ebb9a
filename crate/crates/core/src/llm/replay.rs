//! Recorded request/response fixtures.
//!
//! A fixture is a JSON array of `{"request_hash": "<sha256 hex>",
//! "response": "<text>"}`, where the hash covers [`Transcript::render`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, LanguageModel, LlmError, Role, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub request_hash: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayBackend {
    responses: BTreeMap<String, String>,
}

impl ReplayBackend {
    /// Rejects fixtures that map one request to two different responses.
    pub fn new(records: Vec<ReplayRecord>) -> Result<Self, LlmError> {
        let mut responses = BTreeMap::new();
        for r in records {
            if r.request_hash.len() != 64 || !r.request_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(LlmError::Fixture(format!(
                    "`{}` is not a sha256 hex digest",
                    r.request_hash
                )));
            }
            if let Some(prev) = responses.insert(r.request_hash.clone(), r.response.clone()) {
                if prev != r.response {
                    return Err(LlmError::Fixture(format!(
                        "conflicting responses for {}",
                        r.request_hash
                    )));
                }
            }
        }
        Ok(Self { responses })
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let records: Vec<ReplayRecord> = serde_json::from_str(text).map_err(|e| LlmError::Fixture(e.to_string()))?;
        Self::new(records)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn complete(&self, transcript: &Transcript) -> Result<ChatMessage, LlmError> {
        let hash = transcript.request_hash();
        self.responses
            .get(&hash)
            .map(|r| ChatMessage::new(Role::Assistant, r.clone()))
            .ok_or(LlmError::ReplayDivergence { hash })
    }
}

/// Wraps a model and records every exchange as a replay fixture.
pub struct Recorder<M> {
    inner: M,
    records: Mutex<Vec<ReplayRecord>>,
}

impl<M: LanguageModel> Recorder<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn records(&self) -> Vec<ReplayRecord> {
        self.records.lock().expect("recorder lock").clone()
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.records()).expect("records serialize");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: LanguageModel> LanguageModel for Recorder<M> {
    fn complete(&self, transcript: &Transcript) -> Result<ChatMessage, LlmError> {
        let reply = self.inner.complete(transcript)?;
        self.records.lock().expect("recorder lock").push(ReplayRecord {
            request_hash: transcript.request_hash(),
            response: reply.content.clone(),
        });
        Ok(reply)
    }
}
