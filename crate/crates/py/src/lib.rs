//! Python module `octo`: dataset generation, training, retrieval and chat
//! sessions over saved artifacts.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use octo_core::encoder::{load_model, save_model, train, EncoderModel, TrainConfig};
use octo_core::eval::training_metrics;
use octo_core::generate::{generate_dataset as generate, GeneratorSpec};
use octo_core::index::{build_index as build, load_index, save_index, RetrievalConfig, TactileIndex};
use octo_core::io::{read_dataset, read_tact, write_dataset, TactPayload};
use octo_core::llm::{LanguageModel, LlmBackend, MockRules, ScriptedMock};
use octo_core::pipeline::{read_video, TactileReading};
use octo_core::saliency::{select_salient_frames, SaliencyConfig};
use octo_core::session::{Session, SessionEnv, SessionError};
use octo_core::{Split, TactileFrame};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn load_tact(path: &Path) -> PyResult<TactPayload> {
    read_tact(path).map_err(value_error)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Writes a seeded synthetic dataset directory and returns its sample count.
#[pyfunction]
#[pyo3(signature = (out, seed = 2025))]
fn generate_dataset(out: PathBuf, seed: u64) -> PyResult<usize> {
    let dataset = generate(&GeneratorSpec::with_seed(seed)).map_err(value_error)?;
    write_dataset(&dataset, &out).map_err(runtime_error)?;
    Ok(dataset.videos.len())
}

/// Trains the encoder, saves it to `out` and returns summary metrics.
#[pyfunction]
#[pyo3(signature = (dataset, out, epochs = None, seed = None))]
fn train_model<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    out: PathBuf,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let dataset = read_dataset(&dataset).map_err(value_error)?;
    let mut cfg = TrainConfig::default();
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(value_error)?;
    let (model, log) = py.detach(|| train(&dataset, &cfg)).map_err(runtime_error)?;
    save_model(&model, &out).map_err(runtime_error)?;
    let m = training_metrics(&dataset, &model, &cfg.saliency).map_err(runtime_error)?;
    let d = PyDict::new(py);
    d.set_item("epochs", log.epochs.len())?;
    d.set_item("best_epoch", log.best_epoch)?;
    d.set_item("heldout_mae", m.heldout_mae)?;
    d.set_item("same_part_cosine", m.same_part_cosine)?;
    d.set_item("different_object_cosine", m.different_object_cosine)?;
    Ok(d)
}

/// Indexes the train split and returns the entry count.
#[pyfunction]
fn build_index(dataset: PathBuf, model: PathBuf, out: PathBuf) -> PyResult<usize> {
    let dataset = read_dataset(&dataset).map_err(value_error)?;
    let model = load_model(&model).map_err(value_error)?;
    let index = build(&dataset, &model, &[Split::Train], &model.trained_saliency()).map_err(runtime_error)?;
    save_index(&index, &out).map_err(runtime_error)?;
    Ok(index.len())
}

/// Indices of the `k` most salient frames, ascending. Each frame is a
/// row-major list of `height * width` values in [0, 1].
#[pyfunction]
fn select_salient(frames: Vec<Vec<f32>>, height: u32, width: u32, k: usize) -> PyResult<Vec<usize>> {
    let frames = frames
        .into_iter()
        .map(|v| TactileFrame::new(height, width, v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_error)?;
    select_salient_frames(&frames, &SaliencyConfig::with_k(k)).map_err(value_error)
}

#[pyclass(frozen, get_all)]
struct Reading {
    salient_frames: Vec<usize>,
    hardness: f64,
    roughness: f64,
    adjectives: Vec<String>,
    embedding: Vec<f32>,
}

impl From<TactileReading> for Reading {
    fn from(r: TactileReading) -> Self {
        Self {
            salient_frames: r.salient_frames,
            hardness: r.hardness,
            roughness: r.roughness,
            adjectives: r.adjectives,
            embedding: r.embedding.0,
        }
    }
}

#[pymethods]
impl Reading {
    fn __repr__(&self) -> String {
        format!(
            "Reading(hardness={:.2}, roughness={:.2}, adjectives={:?})",
            self.hardness, self.roughness, self.adjectives
        )
    }
}

/// A trained encoder and a retrieval index.
#[pyclass(frozen)]
struct Encoder {
    model: EncoderModel,
    index: TactileIndex,
}

impl Encoder {
    fn reading(&self, path: &Path) -> PyResult<TactileReading> {
        let video = load_tact(path)?
            .into_video(file_name(path), "query", "query")
            .map_err(value_error)?;
        read_video(&self.model, &video, &self.model.trained_saliency()).map_err(value_error)
    }
}

#[pymethods]
impl Encoder {
    #[new]
    fn new(model: PathBuf, index: PathBuf) -> PyResult<Self> {
        Ok(Self {
            model: load_model(&model).map_err(value_error)?,
            index: load_index(&index).map_err(value_error)?,
        })
    }

    fn read(&self, sample: PathBuf) -> PyResult<Reading> {
        self.reading(&sample).map(Reading::from)
    }

    /// Retrieved objects as `(label, object_id, retrieved_sample_count, max_similarity)`.
    #[pyo3(signature = (sample, top_k = 5))]
    fn query(&self, sample: PathBuf, top_k: usize) -> PyResult<Vec<(String, String, usize, f64)>> {
        let reading = self.reading(&sample)?;
        let result = self
            .index
            .retrieve(&reading.embedding, &RetrievalConfig { top_k })
            .map_err(value_error)?;
        Ok(result
            .objects
            .into_iter()
            .map(|o| (o.label, o.object_id, o.retrieved_sample_count, o.max_similarity))
            .collect())
    }

    /// Object id of the single most similar indexed sample.
    fn classify(&self, sample: PathBuf) -> PyResult<String> {
        let reading = self.reading(&sample)?;
        self.index
            .baseline_classify(&reading.embedding, None)
            .map_err(value_error)
    }

    fn __len__(&self) -> usize {
        self.index.len()
    }
}

#[pyclass(frozen, get_all)]
struct Reply {
    text: String,
    guess: Option<String>,
    ranking: Option<Vec<usize>>,
    salient_frames: Option<Vec<usize>>,
}

impl From<octo_core::session::Reply> for Reply {
    fn from(r: octo_core::session::Reply) -> Self {
        Self {
            text: r.text,
            guess: r.guess,
            ranking: r.ranking,
            salient_frames: r.salient_frames,
        }
    }
}

#[pymethods]
impl Reply {
    fn __repr__(&self) -> String {
        format!(
            "Reply(text={:?}, guess={:?}, ranking={:?})",
            self.text, self.guess, self.ranking
        )
    }
}

fn session_error(e: SessionError) -> PyErr {
    if e.is_user_error() {
        value_error(e)
    } else {
        runtime_error(e)
    }
}

/// Interactive chat session with the scripted mock model. Commands are the
/// same as in `octo chat`; `touch` takes a sample path.
#[pyclass]
struct ChatSession {
    inner: Session,
}

#[pymethods]
impl ChatSession {
    #[new]
    #[pyo3(signature = (model, index, knowledge = None, rag = true))]
    fn new(model: PathBuf, index: PathBuf, knowledge: Option<PathBuf>, rag: bool) -> PyResult<Self> {
        let model = load_model(&model).map_err(value_error)?;
        let index = load_index(&index).map_err(value_error)?;
        let rules = match knowledge {
            Some(dir) => MockRules::from_dataset(&read_dataset(&dir).map_err(value_error)?),
            None => MockRules::default(),
        };
        let llm: Arc<dyn LanguageModel> = Arc::new(LlmBackend::ScriptedMock(ScriptedMock::new(rules)));
        let env = SessionEnv {
            saliency: model.trained_saliency(),
            model: Arc::new(model),
            index: index.into_shared(),
            llm,
            retrieval: RetrievalConfig::default(),
            rag,
        };
        Ok(Self {
            inner: Session::new("python", env),
        })
    }

    fn touch(&mut self, sample: PathBuf) -> PyResult<Reply> {
        let payload = load_tact(&sample)?;
        self.inner
            .touch(&file_name(&sample), payload)
            .map(Reply::from)
            .map_err(session_error)
    }

    fn send(&mut self, line: &str) -> PyResult<Reply> {
        self.inner.message(line).map(Reply::from).map_err(session_error)
    }

    /// The prompts exchanged so far, with tactile placeholders resolved.
    fn transcript(&self) -> Vec<(String, String)> {
        self.inner
            .transcript()
            .resolved_messages()
            .into_iter()
            .map(|m| {
                let role = serde_json::to_value(m.role)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned));
                (role.unwrap_or_default(), m.content)
            })
            .collect()
    }
}

#[pymodule]
fn octo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(build_index, m)?)?;
    m.add_function(wrap_pyfunction!(select_salient, m)?)?;
    m.add_class::<Reading>()?;
    m.add_class::<Encoder>()?;
    m.add_class::<Reply>()?;
    m.add_class::<ChatSession>()?;
    Ok(())
}
