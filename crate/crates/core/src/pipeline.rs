//! Steps shared by the evaluation harness and interactive sessions: read a
//! video with the encoder, have the language model describe it, and
//! optionally augment the description with retrieved neighbours.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjectives::adjectives_for;
use crate::embedding::Embedding;
use crate::encoder::{embed_sample, regress_properties, EncoderError, EncoderModel};
use crate::index::{augment_description, AugmentError, IndexError, RetrievalConfig, RetrievalResult, TactileIndex};
use crate::llm::{
    build_describe_prompt, converse, parse_description, LanguageModel, LlmError, PromptError, Transcript,
};
use crate::saliency::{select_salient, SaliencyConfig};
use crate::tactile::TactileVideo;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// What the encoder makes of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileReading {
    pub salient_frames: Vec<usize>,
    pub embedding: Embedding,
    pub hardness: f64,
    pub roughness: f64,
    pub adjectives: Vec<String>,
}

impl TactileReading {
    /// Text that stands in for the frames inside a transcript.
    pub fn text(&self) -> String {
        self.adjectives.join(", ")
    }
}

pub fn read_video(
    model: &EncoderModel,
    video: &TactileVideo,
    saliency: &SaliencyConfig,
) -> Result<TactileReading, PipelineError> {
    let salient_frames = select_salient(video, saliency).map_err(EncoderError::from)?;
    let embedding = embed_sample(model, video, saliency)?;
    let (hardness, roughness) = regress_properties(model, video, saliency)?;
    Ok(TactileReading {
        salient_frames,
        embedding,
        hardness,
        roughness,
        adjectives: adjectives_for(hardness, roughness),
    })
}

/// Appends a describe turn for `reading` and returns the adjectives parsed
/// from the reply.
pub fn describe(
    llm: &dyn LanguageModel,
    transcript: &mut Transcript,
    object_number: usize,
    reading: &TactileReading,
) -> Result<Vec<String>, PipelineError> {
    build_describe_prompt(object_number, &reading.text())
        .push_into(transcript)
        .map_err(LlmError::from)?;
    let reply = converse(llm, transcript)?;
    Ok(parse_description(&reply.content)?.1)
}

/// The description text fed to later prompts: the adjectives alone, or the
/// adjectives followed by the retrieval line.
pub fn description_text(
    adjectives: &[String],
    rag: Option<(&TactileIndex, &RetrievalConfig)>,
    embedding: &Embedding,
) -> Result<(String, Option<RetrievalResult>), PipelineError> {
    match rag {
        None => Ok((adjectives.join(", "), None)),
        Some((index, cfg)) => {
            let result = index.retrieve(embedding, cfg)?;
            Ok((augment_description(adjectives, &result)?, Some(result)))
        }
    }
}
