//! Guessing-game and sorting protocols over a dataset, an encoder, an index
//! and a language model.
//!
//! Seen categories probe held-out samples of objects that are in the index.
//! Unseen categories probe objects absent from both the encoder's training
//! data and the index; the first `teach_per_part` samples of every unseen
//! part are reserved for teaching and never used as probes.

mod guessing;
mod report;
mod sorting;
mod training;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{BuildIndexError, IndexError, RetrievalConfig};
use crate::llm::LlmError;
use crate::pipeline::PipelineError;
use crate::saliency::SaliencyConfig;
use crate::tactile::{Dataset, Split};

pub use guessing::run_guessing;
pub use report::*;
pub use sorting::{pairwise_score, run_sorting};
pub use training::{training_metrics, TrainingMetrics};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("category `{category}` needs {needed} objects, the dataset offers {found}")]
    NotEnoughObjects {
        category: String,
        needed: usize,
        found: usize,
    },
    #[error("category `{0}` has no probe samples")]
    NoProbes(String),
    #[error("language model failed: {0}")]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Build(#[from] BuildIndexError),
    #[error("unknown sample `{0}`")]
    UnknownSample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    EncoderBaseline,
    LlmNoRag,
    LlmRag,
    LlmRagTeach,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::EncoderBaseline,
        Variant::LlmNoRag,
        Variant::LlmRag,
        Variant::LlmRagTeach,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::EncoderBaseline => "encoder-baseline",
            Variant::LlmNoRag => "llm-no-rag",
            Variant::LlmRag => "llm-rag",
            Variant::LlmRagTeach => "llm-rag-teach",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "encoder-baseline" | "baseline" => Ok(Variant::EncoderBaseline),
            "llm-no-rag" | "no-rag" => Ok(Variant::LlmNoRag),
            "llm-rag" | "rag" => Ok(Variant::LlmRag),
            "llm-rag-teach" | "rag-teach" | "teach" => Ok(Variant::LlmRagTeach),
            other => Err(format!(
                "unknown variant `{other}` (expected encoder-baseline, llm-no-rag, llm-rag or llm-rag-teach)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    /// Train objects, probed through their held-out samples.
    Seen,
    /// Objects with no train or validation samples.
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub pool: Pool,
    /// Objects skipped at the start of the pool.
    pub offset: usize,
    pub objects: usize,
    /// Upper bound; fewer probes are used when the pool is smaller.
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    pub retrieval: RetrievalConfig,
    pub saliency: SaliencyConfig,
    pub teach_per_part: usize,
    pub categories: Vec<CategorySpec>,
    pub sort_trials: usize,
    pub sort_objects: usize,
    pub sort_gap: f64,
    pub tie_tolerance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let spec = |name: &str, pool, offset, probes| CategorySpec {
            name: name.into(),
            pool,
            offset,
            objects: 3,
            probes,
        };
        Self {
            seed: 11,
            retrieval: RetrievalConfig::default(),
            saliency: SaliencyConfig::default(),
            teach_per_part: 3,
            categories: vec![
                spec("balls", Pool::Seen, 0, 25),
                spec("fruits", Pool::Seen, 3, 26),
                spec("unseen", Pool::Unseen, 0, 41),
            ],
            sort_trials: 20,
            sort_objects: 3,
            sort_gap: 2.0,
            tie_tolerance: 0.25,
        }
    }
}

/// A resolved guessing category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub pool: Pool,
    pub object_ids: Vec<String>,
    pub labels: Vec<String>,
    pub probes: Vec<String>,
    pub teach: Vec<String>,
}

/// Train objects in dataset order.
pub fn seen_objects(dataset: &Dataset) -> Vec<String> {
    let train = dataset.objects_in(Split::Train);
    dataset
        .objects
        .iter()
        .filter(|o| train.contains(&o.object_id))
        .map(|o| o.object_id.clone())
        .collect()
}

/// Objects without train or validation samples, in dataset order.
pub fn unseen_objects(dataset: &Dataset) -> Vec<String> {
    let known: BTreeSet<String> = dataset
        .objects_in(Split::Train)
        .into_iter()
        .chain(dataset.objects_in(Split::Val))
        .collect();
    dataset
        .objects
        .iter()
        .filter(|o| !known.contains(&o.object_id))
        .map(|o| o.object_id.clone())
        .collect()
}

/// Resolves category specs to objects, probes and teaching samples.
pub fn select_categories(dataset: &Dataset, cfg: &EvalConfig) -> Result<Vec<Category>, EvalError> {
    let seen = seen_objects(dataset);
    let unseen = unseen_objects(dataset);
    cfg.categories
        .iter()
        .enumerate()
        .map(|(ci, spec)| {
            let pool = match spec.pool {
                Pool::Seen => &seen,
                Pool::Unseen => &unseen,
            };
            let object_ids: Vec<String> = pool.iter().skip(spec.offset).take(spec.objects).cloned().collect();
            if object_ids.len() < spec.objects {
                return Err(EvalError::NotEnoughObjects {
                    category: spec.name.clone(),
                    needed: spec.objects,
                    found: object_ids.len(),
                });
            }
            let mut candidates_pool = Vec::new();
            let mut teach = Vec::new();
            for oid in &object_ids {
                let object = dataset.object(oid).expect("pooled object exists");
                for part in &object.parts {
                    let samples: Vec<&str> = dataset
                        .videos
                        .iter()
                        .filter(|v| v.object_id == *oid && v.part_id == part.part_id)
                        .map(|v| v.sample_id.as_str())
                        .collect();
                    match spec.pool {
                        Pool::Seen => candidates_pool.extend(
                            samples
                                .into_iter()
                                .filter(|s| dataset.split_of(s) == Some(Split::Test))
                                .map(str::to_owned),
                        ),
                        Pool::Unseen => {
                            let k = cfg.teach_per_part.min(samples.len());
                            teach.extend(samples[..k].iter().map(|s| s.to_string()));
                            candidates_pool.extend(samples[k..].iter().map(|s| s.to_string()));
                        }
                    }
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(ci as u64);
            candidates_pool.shuffle(&mut rng);
            candidates_pool.truncate(spec.probes);
            candidates_pool.sort();
            if candidates_pool.is_empty() {
                return Err(EvalError::NoProbes(spec.name.clone()));
            }
            let labels = object_ids
                .iter()
                .map(|o| dataset.object(o).expect("pooled object exists").label.clone())
                .collect();
            Ok(Category {
                name: spec.name.clone(),
                pool: spec.pool,
                object_ids,
                labels,
                probes: candidates_pool,
                teach,
            })
        })
        .collect()
}
