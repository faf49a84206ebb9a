//! Exhaustive cosine-similarity store over sample embeddings.
//!
//! Retrieval takes the `top_k` most similar samples and aggregates them to
//! objects, ranked by retrieved-sample count, then best similarity, then
//! object id. The same store backs nearest-neighbour classification and
//! runtime teaching.

mod augment;
mod file;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedding;
use crate::encoder::{embed_sample, EncoderError, EncoderModel};
use crate::saliency::SaliencyConfig;
use crate::tactile::{Dataset, PadType, Split};

pub use augment::{augment_description, parse_augmented, AugmentError, AugmentedDescription, SimilarObject};
pub use file::{index_from_json, index_to_json, load_index, save_index, IndexFileError, INDEX_FORMAT, INDEX_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("index is empty")]
    Empty,
    #[error("no stored sample belongs to the candidate objects")]
    NoCandidates,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("query norm is {0}, expected a unit vector")]
    NotUnitNorm(f64),
    #[error("embedding has dimension {found}, index expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample `{0}` is already indexed")]
    DuplicateSample(String),
    #[error("invalid entry `{sample_id}`: {reason}")]
    InvalidEntry { sample_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub sample_id: String,
    pub object_id: String,
    pub part_id: String,
    pub label: String,
    pub adjectives: Vec<String>,
    pub embedding: Embedding,
    pub pad_type: PadType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { top_k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSample {
    pub sample_id: String,
    pub object_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedObject {
    pub object_id: String,
    pub label: String,
    /// Adjectives of this object's most similar retrieved sample.
    pub adjectives: Vec<String>,
    pub retrieved_sample_count: usize,
    pub max_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub objects: Vec<RetrievedObject>,
    pub samples: Vec<RetrievedSample>,
}

impl RetrievalResult {
    pub fn top(&self) -> Option<&RetrievedObject> {
        self.objects.first()
    }
}

/// Similarity used throughout: the dot product of two unit vectors,
/// accumulated in f64 and clamped to `[-1, 1]`.
pub fn similarity(a: &Embedding, b: &Embedding) -> f64 {
    a.dot(b).clamp(-1.0, 1.0)
}

/// Orders by similarity descending, then sample id ascending.
fn by_similarity(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TactileIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    ids: HashSet<String>,
}

pub type SharedIndex = Arc<RwLock<TactileIndex>>;

impl TactileIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn contains(&self, sample_id: &str) -> bool {
        self.ids.contains(sample_id)
    }

    pub fn object_ids(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.object_id.clone()).collect()
    }

    pub fn into_shared(self) -> SharedIndex {
        Arc::new(RwLock::new(self))
    }

    fn check_embedding(&self, e: &Embedding) -> Result<(), IndexError> {
        if e.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: e.dim(),
            });
        }
        if !e.is_unit() {
            return Err(IndexError::NotUnitNorm(e.norm()));
        }
        Ok(())
    }

    fn check_entry(&self, entry: &IndexEntry) -> Result<(), IndexError> {
        let invalid = |reason: &str| IndexError::InvalidEntry {
            sample_id: entry.sample_id.clone(),
            reason: reason.to_owned(),
        };
        if entry.sample_id.is_empty() || entry.object_id.is_empty() || entry.part_id.is_empty() {
            return Err(invalid("ids must be non-empty"));
        }
        if entry.label.trim().is_empty() {
            return Err(invalid("label must be non-empty"));
        }
        self.check_embedding(&entry.embedding)
            .map_err(|e| invalid(&e.to_string()))?;
        if self.ids.contains(&entry.sample_id) {
            return Err(IndexError::DuplicateSample(entry.sample_id.clone()));
        }
        Ok(())
    }

    /// Adds one entry; on error the index is unchanged.
    pub fn insert(&mut self, entry: IndexEntry) -> Result<(), IndexError> {
        self.check_entry(&entry)?;
        self.ids.insert(entry.sample_id.clone());
        self.entries.push(entry);
        Ok(())
    }

    /// Adds all entries or none.
    pub fn insert_all(&mut self, entries: Vec<IndexEntry>) -> Result<(), IndexError> {
        let mut fresh = HashSet::new();
        for e in &entries {
            self.check_entry(e)?;
            if !fresh.insert(e.sample_id.as_str()) {
                return Err(IndexError::DuplicateSample(e.sample_id.clone()));
            }
        }
        for e in entries {
            self.ids.insert(e.sample_id.clone());
            self.entries.push(e);
        }
        Ok(())
    }

    pub fn retrieve(&self, query: &Embedding, cfg: &RetrievalConfig) -> Result<RetrievalResult, IndexError> {
        if cfg.top_k == 0 {
            return Err(IndexError::ZeroTopK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::Empty);
        }
        self.check_embedding(query)?;

        let mut scored: Vec<(f64, &IndexEntry)> = self
            .entries
            .iter()
            .map(|e| (similarity(query, &e.embedding), e))
            .collect();
        scored.sort_by(|a, b| by_similarity((a.0, &a.1.sample_id), (b.0, &b.1.sample_id)));
        scored.truncate(cfg.top_k);

        let mut groups: BTreeMap<&str, RetrievedObject> = BTreeMap::new();
        for &(sim, e) in &scored {
            // scored is sorted, so the first sample seen per object is its best
            groups
                .entry(&e.object_id)
                .and_modify(|o| o.retrieved_sample_count += 1)
                .or_insert_with(|| RetrievedObject {
                    object_id: e.object_id.clone(),
                    label: e.label.clone(),
                    adjectives: e.adjectives.clone(),
                    retrieved_sample_count: 1,
                    max_similarity: sim,
                });
        }
        let mut objects: Vec<RetrievedObject> = groups.into_values().collect();
        objects.sort_by(|a, b| {
            b.retrieved_sample_count
                .cmp(&a.retrieved_sample_count)
                .then_with(|| b.max_similarity.total_cmp(&a.max_similarity))
                .then_with(|| a.object_id.cmp(&b.object_id))
        });
        let samples = scored
            .into_iter()
            .map(|(similarity, e)| RetrievedSample {
                sample_id: e.sample_id.clone(),
                object_id: e.object_id.clone(),
                similarity,
            })
            .collect();
        Ok(RetrievalResult { objects, samples })
    }

    /// Object of the single most similar stored sample, optionally restricted
    /// to `candidates`.
    pub fn baseline_classify(
        &self,
        query: &Embedding,
        candidates: Option<&BTreeSet<String>>,
    ) -> Result<String, IndexError> {
        if self.entries.is_empty() {
            return Err(IndexError::Empty);
        }
        self.check_embedding(query)?;
        self.entries
            .iter()
            .filter(|e| candidates.is_none_or(|c| c.contains(&e.object_id)))
            .map(|e| (similarity(query, &e.embedding), e))
            .min_by(|a, b| by_similarity((a.0, &a.1.sample_id), (b.0, &b.1.sample_id)))
            .map(|(_, e)| e.object_id.clone())
            .ok_or(IndexError::NoCandidates)
    }
}

#[derive(Debug, Error)]
pub enum BuildIndexError {
    #[error("sample `{0}` has no object or part record")]
    Dangling(String),
    #[error("embedding `{sample_id}`: {error}")]
    Encoder { sample_id: String, error: EncoderError },
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Embeds one dataset video into an index entry carrying its part's
/// adjectives and its object's label.
pub fn entry_for(
    dataset: &Dataset,
    model: &EncoderModel,
    sample_id: &str,
    saliency: &SaliencyConfig,
) -> Result<IndexEntry, BuildIndexError> {
    let dangling = || BuildIndexError::Dangling(sample_id.to_owned());
    let video = dataset.video(sample_id).ok_or_else(dangling)?;
    let object = dataset.object(&video.object_id).ok_or_else(dangling)?;
    let part = object.part(&video.part_id).ok_or_else(dangling)?;
    let embedding = embed_sample(model, video, saliency).map_err(|error| BuildIndexError::Encoder {
        sample_id: sample_id.to_owned(),
        error,
    })?;
    Ok(IndexEntry {
        sample_id: video.sample_id.clone(),
        object_id: object.object_id.clone(),
        part_id: part.part_id.clone(),
        label: object.label.clone(),
        adjectives: part.adjectives.clone(),
        embedding,
        pad_type: video.pad_type,
    })
}

/// Index over every video in `splits`, in dataset order.
pub fn build_index(
    dataset: &Dataset,
    model: &EncoderModel,
    splits: &[Split],
    saliency: &SaliencyConfig,
) -> Result<TactileIndex, BuildIndexError> {
    let mut index = TactileIndex::new(model.dims().embed);
    let entries = dataset
        .videos
        .iter()
        .filter(|v| dataset.split_of(&v.sample_id).is_some_and(|s| splits.contains(&s)))
        .map(|v| entry_for(dataset, model, &v.sample_id, saliency))
        .collect::<Result<Vec<_>, _>>()?;
    index.insert_all(entries)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn entry(id: &str, object: &str, v: &[f64]) -> IndexEntry {
        IndexEntry {
            sample_id: id.into(),
            object_id: object.into(),
            part_id: "p1".into(),
            label: format!("label of {object}"),
            adjectives: vec!["hard".into()],
            embedding: Embedding::normalized_from(v).unwrap(),
            pad_type: PadType::Plain,
        }
    }

    fn unit(v: &[f64]) -> Embedding {
        Embedding::normalized_from(v).unwrap()
    }

    #[test]
    fn self_query_is_rank_one() {
        let mut idx = TactileIndex::new(3);
        idx.insert(entry("a", "o1", &[1.0, 0.0, 0.0])).unwrap();
        idx.insert(entry("b", "o2", &[0.0, 1.0, 0.0])).unwrap();
        let q = idx.entries()[1].embedding.clone();
        let r = idx.retrieve(&q, &RetrievalConfig::default()).unwrap();
        assert_eq!(r.samples[0].sample_id, "b");
        assert_eq!(r.samples[0].similarity, 1.0);
        assert_eq!(r.objects[0].object_id, "o2");
    }

    #[test]
    fn single_entry_any_query() {
        let mut idx = TactileIndex::new(2);
        idx.insert(entry("a", "o1", &[1.0, 1.0])).unwrap();
        let r = idx.retrieve(&unit(&[-1.0, 0.2]), &RetrievalConfig::default()).unwrap();
        assert_eq!(r.objects.len(), 1);
        assert_eq!(r.objects[0].retrieved_sample_count, 1);
    }

    #[test]
    fn duplicate_rejected_and_index_unchanged() {
        let mut idx = TactileIndex::new(2);
        idx.insert(entry("a", "o1", &[1.0, 0.0])).unwrap();
        let before = idx.clone();
        assert_eq!(
            idx.insert(entry("a", "o9", &[0.0, 1.0])),
            Err(IndexError::DuplicateSample("a".into()))
        );
        assert_eq!(idx, before);
        let batch = vec![entry("b", "o1", &[1.0, 0.0]), entry("b", "o1", &[1.0, 0.0])];
        assert!(idx.insert_all(batch).is_err());
        assert_eq!(idx, before);
    }

    #[test]
    fn rejects_bad_queries() {
        let mut idx = TactileIndex::new(2);
        let cfg = RetrievalConfig::default();
        assert_eq!(idx.retrieve(&unit(&[1.0, 0.0]), &cfg), Err(IndexError::Empty));
        idx.insert(entry("a", "o1", &[1.0, 0.0])).unwrap();
        assert!(matches!(
            idx.retrieve(&Embedding(vec![2.0, 0.0]), &cfg),
            Err(IndexError::NotUnitNorm(_))
        ));
        assert!(matches!(
            idx.retrieve(&unit(&[1.0, 0.0, 0.0]), &cfg),
            Err(IndexError::DimensionMismatch { .. })
        ));
        assert_eq!(
            idx.retrieve(&unit(&[1.0, 0.0]), &RetrievalConfig { top_k: 0 }),
            Err(IndexError::ZeroTopK)
        );
        assert!(idx.insert(entry("b", "o1", &[1.0, 0.0])).is_ok());
        let mut bad = entry("c", "o1", &[1.0, 0.0]);
        bad.embedding = Embedding(vec![0.5, 0.5]);
        assert!(matches!(idx.insert(bad), Err(IndexError::InvalidEntry { .. })));
    }

    #[test]
    fn count_beats_similarity_and_ties_break_on_ids() {
        let mut idx = TactileIndex::new(2);
        idx.insert(entry("x1", "near", &[1.0, 0.0])).unwrap();
        idx.insert(entry("y1", "many", &[0.9, 0.3])).unwrap();
        idx.insert(entry("y2", "many", &[0.9, 0.31])).unwrap();
        // identical embeddings: smaller sample id wins the slot
        idx.insert(entry("z2", "twin", &[0.0, 1.0])).unwrap();
        idx.insert(entry("z1", "twin", &[0.0, 1.0])).unwrap();
        let r = idx.retrieve(&unit(&[1.0, 0.0]), &RetrievalConfig { top_k: 3 }).unwrap();
        let ranked: Vec<_> = r.objects.iter().map(|o| o.object_id.as_str()).collect();
        assert_eq!(ranked, ["many", "near"]);
        let r = idx.retrieve(&unit(&[0.0, 1.0]), &RetrievalConfig { top_k: 1 }).unwrap();
        assert_eq!(r.samples[0].sample_id, "z1");
    }

    #[test]
    fn baseline_respects_candidates() {
        let mut idx = TactileIndex::new(2);
        idx.insert(entry("a", "o1", &[1.0, 0.0])).unwrap();
        idx.insert(entry("b", "o2", &[0.6, 0.8])).unwrap();
        let q = unit(&[1.0, 0.1]);
        assert_eq!(idx.baseline_classify(&q, None).unwrap(), "o1");
        let only = BTreeSet::from(["o2".to_string()]);
        assert_eq!(idx.baseline_classify(&q, Some(&only)).unwrap(), "o2");
        let none = BTreeSet::from(["o7".to_string()]);
        assert_eq!(idx.baseline_classify(&q, Some(&none)), Err(IndexError::NoCandidates));
    }

    #[test]
    fn insert_visible_to_later_readers() {
        let shared = TactileIndex::new(2).into_shared();
        let writer = {
            let shared = Arc::clone(&shared);
            std::thread::spawn(move || shared.write().unwrap().insert(entry("t", "taught", &[0.0, 1.0])))
        };
        writer.join().unwrap().unwrap();
        let r = shared
            .read()
            .unwrap()
            .retrieve(&unit(&[0.0, 1.0]), &RetrievalConfig::default())
            .unwrap();
        assert_eq!(r.objects[0].object_id, "taught");
    }
}
