//! Machine-readable evaluation reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adjectives::Property;
use crate::encoder::{model_to_json, EncoderModel};
use crate::index::{index_to_json, TactileIndex};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unsupported report schema version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub dataset_seed: u64,
    pub eval_seed: u64,
    pub model_sha256: String,
    pub index_sha256: String,
    pub backend: String,
}

impl Fingerprint {
    pub fn new(dataset_seed: u64, eval_seed: u64, model: &EncoderModel, index: &TactileIndex, backend: &str) -> Self {
        Self {
            dataset_seed,
            eval_seed,
            model_sha256: sha256_hex(model_to_json(model).as_bytes()),
            index_sha256: sha256_hex(index_to_json(index).as_bytes()),
            backend: backend.to_owned(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessTrial {
    pub trial_id: String,
    pub variant: String,
    pub category: String,
    pub probe_sample_id: String,
    pub truth_object_id: String,
    pub truth_label: String,
    pub candidates: Vec<String>,
    /// Whether the index had been taught this category's object samples.
    pub taught: bool,
    pub predicted_label: Option<String>,
    pub correct: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortTrial {
    pub trial_id: String,
    pub variant: String,
    pub category: String,
    pub property: Property,
    pub sample_ids: Vec<String>,
    pub truth_scores: Vec<f64>,
    /// 1-based object numbers in decreasing true score.
    pub truth_ranking: Vec<usize>,
    pub predicted_ranking: Option<Vec<usize>>,
    pub correct_pairs: usize,
    pub total_pairs: usize,
    pub exact: bool,
    pub error: Option<String>,
}

/// Per variant and category. For sorting, `correct/total` count object
/// pairs and `exact_*` count whole rankings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub variant: String,
    pub category: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: Option<f64>,
    pub exact_correct: Option<usize>,
    pub exact_total: Option<usize>,
    pub exact_accuracy: Option<f64>,
}

fn ratio(correct: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub task: String,
    pub fingerprint: Fingerprint,
    pub summaries: Vec<CategorySummary>,
    pub guess_trials: Vec<GuessTrial>,
    pub sort_trials: Vec<SortTrial>,
}

impl EvalReport {
    /// Sorts trials by id and recomputes every summary from them.
    pub fn assemble(
        task: &str,
        fingerprint: Fingerprint,
        mut guess_trials: Vec<GuessTrial>,
        mut sort_trials: Vec<SortTrial>,
    ) -> Self {
        guess_trials.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
        sort_trials.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
        let mut keys: Vec<(String, String)> = guess_trials
            .iter()
            .map(|t| (t.variant.clone(), t.category.clone()))
            .chain(sort_trials.iter().map(|t| (t.variant.clone(), t.category.clone())))
            .collect();
        keys.sort();
        keys.dedup();
        let summaries = keys
            .into_iter()
            .map(|(variant, category)| {
                let g: Vec<&GuessTrial> = guess_trials
                    .iter()
                    .filter(|t| t.variant == variant && t.category == category)
                    .collect();
                let s: Vec<&SortTrial> = sort_trials
                    .iter()
                    .filter(|t| t.variant == variant && t.category == category)
                    .collect();
                let correct = g.iter().filter(|t| t.correct).count() + s.iter().map(|t| t.correct_pairs).sum::<usize>();
                let total = g.len() + s.iter().map(|t| t.total_pairs).sum::<usize>();
                let (exact_correct, exact_total) = if s.is_empty() {
                    (None, None)
                } else {
                    (Some(s.iter().filter(|t| t.exact).count()), Some(s.len()))
                };
                CategorySummary {
                    variant,
                    category,
                    correct,
                    total,
                    accuracy: ratio(correct, total),
                    exact_correct,
                    exact_total,
                    exact_accuracy: exact_correct.zip(exact_total).and_then(|(c, t)| ratio(c, t)),
                }
            })
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            task: task.to_owned(),
            fingerprint,
            summaries,
            guess_trials,
            sort_trials,
        }
    }

    pub fn summary(&self, variant: &str, category: &str) -> Option<&CategorySummary> {
        self.summaries
            .iter()
            .find(|s| s.variant == variant && s.category == category)
    }

    pub fn accuracy(&self, variant: &str, category: &str) -> Option<f64> {
        self.summary(variant, category).and_then(|s| s.accuracy)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::UnsupportedVersion(report.schema_version));
        }
        Ok(report)
    }
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<(), ReportError> {
    fs::write(path, report.to_json()).map_err(|error| ReportError::Io {
        path: path.display().to_string(),
        error,
    })
}

pub fn read_report(path: &Path) -> Result<EvalReport, ReportError> {
    let text = fs::read_to_string(path).map_err(|error| ReportError::Io {
        path: path.display().to_string(),
        error,
    })?;
    EvalReport::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp() -> Fingerprint {
        Fingerprint {
            dataset_seed: 1,
            eval_seed: 2,
            model_sha256: "m".into(),
            index_sha256: "i".into(),
            backend: "scripted-mock".into(),
        }
    }

    fn trial(id: &str, category: &str, correct: bool) -> GuessTrial {
        GuessTrial {
            trial_id: id.into(),
            variant: "llm-rag".into(),
            category: category.into(),
            probe_sample_id: id.into(),
            truth_object_id: "o".into(),
            truth_label: "l".into(),
            candidates: vec!["l".into(), "k".into()],
            taught: false,
            predicted_label: correct.then(|| "l".into()),
            correct,
            error: None,
        }
    }

    #[test]
    fn empty_report_has_no_division_by_zero() {
        let r = EvalReport::assemble("guessing", fp(), vec![], vec![]);
        assert!(r.summaries.is_empty());
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn totals_match_trials_and_order_is_canonical() {
        let a = vec![
            trial("b", "balls", true),
            trial("a", "balls", false),
            trial("c", "fruits", true),
        ];
        let mut b = a.clone();
        b.reverse();
        let ra = EvalReport::assemble("guessing", fp(), a, vec![]);
        let rb = EvalReport::assemble("guessing", fp(), b, vec![]);
        assert_eq!(ra.to_json(), rb.to_json());
        let balls = ra.summary("llm-rag", "balls").unwrap();
        assert_eq!((balls.correct, balls.total), (1, 2));
        assert_eq!(balls.accuracy, Some(0.5));
        assert_eq!(ra.guess_trials.len(), 3);
    }

    #[test]
    fn rejects_other_schema_versions() {
        let text = EvalReport::assemble("guessing", fp(), vec![], vec![])
            .to_json()
            .replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(matches!(
            EvalReport::from_json(&text),
            Err(ReportError::UnsupportedVersion(7))
        ));
    }
}
