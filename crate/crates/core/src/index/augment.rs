//! Retrieval-augmented descriptions.
//!
//! ```text
//! soft, smooth
//! Most similar objects (in order of decreasing similarity): a plush ball (fluffy, soft); a tennis ball (fuzzy, squishy).
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RetrievalResult;

pub const SIMILAR_PREFIX: &str = "Most similar objects (in order of decreasing similarity): ";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AugmentError {
    #[error("retrieval result is empty")]
    EmptyResult,
    #[error("label `{0}` cannot be rendered unambiguously")]
    BadLabel(String),
    #[error("adjective `{0}` cannot be rendered unambiguously")]
    BadAdjective(String),
    #[error("not an augmented description: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarObject {
    pub label: String,
    /// Sorted and de-duplicated.
    pub adjectives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedDescription {
    pub base: Vec<String>,
    pub similar: Vec<SimilarObject>,
}

impl AugmentedDescription {
    pub fn from_result(base: &[String], result: &RetrievalResult) -> Self {
        let similar = result
            .objects
            .iter()
            .map(|o| {
                let mut adjectives = o.adjectives.clone();
                adjectives.sort();
                adjectives.dedup();
                SimilarObject {
                    label: o.label.clone(),
                    adjectives,
                }
            })
            .collect();
        Self {
            base: base.to_vec(),
            similar,
        }
    }

    pub fn render(&self) -> Result<String, AugmentError> {
        if self.similar.is_empty() {
            return Err(AugmentError::EmptyResult);
        }
        for word in &self.base {
            check_adjective(word)?;
        }
        let mut entries = Vec::with_capacity(self.similar.len());
        for o in &self.similar {
            check_label(&o.label)?;
            for word in &o.adjectives {
                check_adjective(word)?;
            }
            let mut adjectives = o.adjectives.clone();
            adjectives.sort();
            entries.push(format!("{} ({})", o.label, adjectives.join(", ")));
        }
        let line = format!("{SIMILAR_PREFIX}{}.", entries.join("; "));
        Ok(if self.base.is_empty() {
            line
        } else {
            format!("{}\n{line}", self.base.join(", "))
        })
    }
}

fn check_label(label: &str) -> Result<(), AugmentError> {
    let bad = label.is_empty()
        || label != label.trim()
        || label.contains("; ")
        || label.contains('\n')
        || label.ends_with(')') && !label.contains(" (")
        || label.ends_with('.');
    if bad {
        Err(AugmentError::BadLabel(label.to_owned()))
    } else {
        Ok(())
    }
}

fn check_adjective(word: &str) -> Result<(), AugmentError> {
    let bad = word.is_empty() || word != word.trim() || word.contains([',', '(', ')', ';', '\n', '.']);
    if bad {
        Err(AugmentError::BadAdjective(word.to_owned()))
    } else {
        Ok(())
    }
}

/// Renders `base` followed by the retrieval line for `result`.
pub fn augment_description(base: &[String], result: &RetrievalResult) -> Result<String, AugmentError> {
    AugmentedDescription::from_result(base, result).render()
}

/// Inverse of [`augment_description`].
pub fn parse_augmented(text: &str) -> Result<AugmentedDescription, AugmentError> {
    let (base_line, line) = match text.split_once('\n') {
        Some((b, l)) => (Some(b), l),
        None => (None, text),
    };
    let base = match base_line {
        Some(b) => b.split(", ").map(str::to_owned).collect(),
        None => Vec::new(),
    };
    let body = line
        .strip_prefix(SIMILAR_PREFIX)
        .ok_or_else(|| AugmentError::Parse("missing similar-objects prefix".into()))?
        .strip_suffix('.')
        .ok_or_else(|| AugmentError::Parse("missing terminating period".into()))?;
    let similar = body
        .split("; ")
        .map(|entry| {
            let inner = entry
                .strip_suffix(')')
                .ok_or_else(|| AugmentError::Parse(format!("entry `{entry}` lacks adjectives")))?;
            let (label, adjs) = inner
                .rsplit_once(" (")
                .ok_or_else(|| AugmentError::Parse(format!("entry `{entry}` lacks adjectives")))?;
            let adjectives = if adjs.is_empty() {
                Vec::new()
            } else {
                adjs.split(", ").map(str::to_owned).collect()
            };
            Ok(SimilarObject {
                label: label.to_owned(),
                adjectives,
            })
        })
        .collect::<Result<Vec<_>, AugmentError>>()?;
    Ok(AugmentedDescription { base, similar })
}
