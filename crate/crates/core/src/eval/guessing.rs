use std::collections::{BTreeMap, BTreeSet};

use super::{select_categories, Category, EvalConfig, EvalError, EvalReport, Fingerprint, GuessTrial, Pool, Variant};
use crate::encoder::EncoderModel;
use crate::index::{entry_for, TactileIndex};
use crate::llm::{build_guess_prompt, converse, parse_answer, LanguageModel, LlmError, Transcript, SYSTEM_PROMPT};
use crate::pipeline::{describe, description_text, read_video, PipelineError, TactileReading};
use crate::tactile::Dataset;

/// Trial failures that count as an incorrect answer rather than aborting
/// the run.
enum TrialError {
    Unparseable(String),
    Fatal(EvalError),
}

impl From<PipelineError> for TrialError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Llm(e) => TrialError::Fatal(EvalError::Llm(e)),
            PipelineError::Prompt(e) => TrialError::Unparseable(e.to_string()),
            other => TrialError::Fatal(EvalError::Pipeline(other)),
        }
    }
}

impl From<LlmError> for TrialError {
    fn from(e: LlmError) -> Self {
        TrialError::Fatal(EvalError::Llm(e))
    }
}

fn llm_guess(
    llm: &dyn LanguageModel,
    reading: &TactileReading,
    labels: &[String],
    rag: Option<(&TactileIndex, &crate::index::RetrievalConfig)>,
) -> Result<String, TrialError> {
    let mut t = Transcript::with_system(SYSTEM_PROMPT).expect("system prompt is valid");
    let adjectives = describe(llm, &mut t, 1, reading)?;
    let (description, _) = description_text(&adjectives, rag, &reading.embedding)?;
    let guess = build_guess_prompt(1, labels, &description, &[])
        .map_err(|e| TrialError::Fatal(PipelineError::Prompt(e).into()))?;
    guess
        .prompt
        .push_into(&mut t)
        .map_err(|e| TrialError::Fatal(LlmError::from(e).into()))?;
    let reply = converse(llm, &mut t)?;
    let k = parse_answer(&reply.content, guess.options.len()).map_err(|e| TrialError::Unparseable(e.to_string()))?;
    Ok(guess.options[k].clone())
}

/// Base index plus every teaching sample of the unseen categories.
fn taught_index(
    dataset: &Dataset,
    model: &EncoderModel,
    index: &TactileIndex,
    categories: &[Category],
    cfg: &EvalConfig,
) -> Result<TactileIndex, EvalError> {
    let mut taught = index.clone();
    let entries = categories
        .iter()
        .filter(|c| c.pool == Pool::Unseen)
        .flat_map(|c| &c.teach)
        .map(|s| entry_for(dataset, model, s, &cfg.saliency))
        .collect::<Result<Vec<_>, _>>()?;
    taught.insert_all(entries)?;
    Ok(taught)
}

/// Runs every `variant` over every configured category.
pub fn run_guessing(
    dataset: &Dataset,
    model: &EncoderModel,
    index: &TactileIndex,
    llm: &dyn LanguageModel,
    backend_name: &str,
    variants: &[Variant],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let categories = select_categories(dataset, cfg)?;
    let needs_teaching = variants
        .iter()
        .any(|v| matches!(v, Variant::EncoderBaseline | Variant::LlmRagTeach));
    let taught = if needs_teaching {
        Some(taught_index(dataset, model, index, &categories, cfg)?)
    } else {
        None
    };

    let mut readings: BTreeMap<&str, TactileReading> = BTreeMap::new();
    for c in &categories {
        for p in &c.probes {
            let video = dataset.video(p).ok_or_else(|| EvalError::UnknownSample(p.clone()))?;
            readings.insert(p, read_video(model, video, &cfg.saliency)?);
        }
    }

    let mut trials = Vec::new();
    for &variant in variants {
        for c in &categories {
            let candidates: BTreeSet<String> = c.object_ids.iter().cloned().collect();
            let use_taught = match variant {
                Variant::EncoderBaseline => c.pool == Pool::Unseen,
                Variant::LlmRagTeach => true,
                _ => false,
            };
            let active = if use_taught {
                taught.as_ref().expect("taught index built")
            } else {
                index
            };
            for p in &c.probes {
                let reading = &readings[p.as_str()];
                let video = dataset.video(p).expect("probe exists");
                let truth = dataset.object(&video.object_id).expect("probe object exists");
                let outcome: Result<String, TrialError> = match variant {
                    Variant::EncoderBaseline => active
                        .baseline_classify(&reading.embedding, Some(&candidates))
                        .map(|oid| dataset.object(&oid).map_or(oid.clone(), |o| o.label.clone()))
                        .map_err(|e| TrialError::Fatal(e.into())),
                    Variant::LlmNoRag => llm_guess(llm, reading, &c.labels, None),
                    Variant::LlmRag | Variant::LlmRagTeach => {
                        llm_guess(llm, reading, &c.labels, Some((active, &cfg.retrieval)))
                    }
                };
                let (predicted_label, error) = match outcome {
                    Ok(label) => (Some(label), None),
                    Err(TrialError::Unparseable(msg)) => (None, Some(msg)),
                    Err(TrialError::Fatal(e)) => return Err(e),
                };
                let correct = predicted_label.as_deref() == Some(truth.label.as_str());
                trials.push(GuessTrial {
                    trial_id: format!("{variant}/{}/{p}", c.name),
                    variant: variant.name().to_owned(),
                    category: c.name.clone(),
                    probe_sample_id: p.clone(),
                    truth_object_id: truth.object_id.clone(),
                    truth_label: truth.label.clone(),
                    candidates: c.labels.clone(),
                    taught: use_taught && c.pool == Pool::Unseen,
                    predicted_label,
                    correct,
                    error,
                });
            }
        }
    }
    let fingerprint = Fingerprint::new(dataset.seed, cfg.seed, model, index, backend_name);
    Ok(EvalReport::assemble("guessing", fingerprint, trials, Vec::new()))
}
