//! Loading artifacts and choosing a language-model backend.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use octo_core::encoder::{self, EncoderModel};
use octo_core::index::{self, RetrievalConfig, TactileIndex};
use octo_core::io::{read_dataset, read_tact, TactPayload};
use octo_core::llm::{LanguageModel, LlmBackend, MockRules, RemoteBackend, RemoteConfig, ReplayBackend, ScriptedMock};
use octo_core::saliency::SaliencyConfig;
use octo_core::session::SessionEnv;
use octo_core::Dataset;

/// A command-line mistake; exits with the usage status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn dataset(path: &Path) -> Result<Dataset> {
    read_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

pub fn model(path: &Path) -> Result<EncoderModel> {
    encoder::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn index(path: &Path) -> Result<TactileIndex> {
    index::load_index(path).with_context(|| format!("loading index {}", path.display()))
}

pub fn tact(path: &Path) -> Result<TactPayload> {
    read_tact(path).with_context(|| format!("loading sample {}", path.display()))
}

/// The salient-frame setting the model was trained with.
pub fn saliency_of(model: &EncoderModel) -> SaliencyConfig {
    model.trained_saliency()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    /// Deterministic rule-based model.
    Mock,
    /// Recorded request/response fixture.
    Replay,
    /// Chat-completions endpoint from OCTO_LLM_URL, OCTO_LLM_MODEL, OCTO_LLM_KEY.
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct BackendOpts {
    /// Language-model backend.
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    pub backend: BackendKind,
    /// Replay fixture (with `--backend replay`).
    #[arg(long, value_name = "FILE")]
    pub fixture: Option<PathBuf>,
}

impl BackendOpts {
    /// `knowledge` seeds the mock's object knowledge; it is ignored by the
    /// other backends.
    pub fn build(&self, knowledge: Option<&Dataset>) -> Result<LlmBackend> {
        match (self.backend, &self.fixture) {
            (BackendKind::Replay, None) => Err(usage("--backend replay needs --fixture <FILE>")),
            (_, Some(_)) if self.backend != BackendKind::Replay => {
                Err(usage("--fixture only applies to --backend replay"))
            }
            (BackendKind::Mock, _) => Ok(LlmBackend::ScriptedMock(ScriptedMock::new(
                knowledge.map(MockRules::from_dataset).unwrap_or_default(),
            ))),
            (BackendKind::Replay, Some(path)) => Ok(LlmBackend::Replay(
                ReplayBackend::load(path).with_context(|| format!("loading fixture {}", path.display()))?,
            )),
            (BackendKind::Remote, _) => Ok(LlmBackend::Remote(RemoteBackend::new(RemoteConfig::from_env()?))),
        }
    }

    pub fn build_shared(&self, knowledge: Option<&Dataset>) -> Result<Arc<dyn LanguageModel>> {
        Ok(Arc::new(self.build(knowledge)?))
    }
}

/// Session environment over a saved model and index.
pub fn session_env(model_path: &Path, index_path: &Path, llm: Arc<dyn LanguageModel>, rag: bool) -> Result<SessionEnv> {
    let model = model(model_path)?;
    Ok(SessionEnv {
        saliency: saliency_of(&model),
        model: Arc::new(model),
        index: index(index_path)?.into_shared(),
        llm,
        retrieval: RetrievalConfig::default(),
        rag,
    })
}
