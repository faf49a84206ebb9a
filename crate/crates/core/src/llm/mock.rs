//! Deterministic rule-based stand-in for a language model.
//!
//! The mock reads only the resolved transcript text. Its "commonsense" is a
//! table from object label to the adjectives people associate with that
//! object.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::prompts::*;
use super::{ChatMessage, LlmError, Role, Transcript};
use crate::adjectives::{implied_score, Property};
use crate::index::{parse_augmented, AugmentedDescription};
use crate::tactile::{Dataset, Split};

const NEUTRAL_SCORE: f64 = 5.0;
const FALLBACK_REPLY: &str = "I can describe what you touched, guess which candidate it is, or sort the touched \
objects by hardness or roughness.";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRules {
    pub knowledge: BTreeMap<String, Vec<String>>,
}

impl MockRules {
    /// Knowledge of the objects with train samples: each label maps to the
    /// union of its parts' adjectives. Objects never trained on are unknown.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let train = dataset.objects_in(Split::Train);
        Self {
            knowledge: dataset
                .objects
                .iter()
                .filter(|o| train.contains(&o.object_id))
                .map(|o| (o.label.clone(), o.adjectives()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptedMock {
    pub rules: MockRules,
}

fn words(text: &str) -> Vec<String> {
    text.trim()
        .trim_end_matches('.')
        .split(',')
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Base adjectives and retrieved neighbours of a description block.
fn read_description(text: &str) -> AugmentedDescription {
    parse_augmented(text).unwrap_or_else(|_| AugmentedDescription {
        base: words(text.lines().next().unwrap_or("")),
        similar: Vec::new(),
    })
}

/// Implied score from the rank-1 neighbour when present, else from the base
/// description.
fn implied(desc: &AugmentedDescription, property: Property) -> f64 {
    let level = property.level_of();
    desc.similar
        .first()
        .and_then(|s| implied_score(s.adjectives.iter().map(String::as_str), level))
        .or_else(|| implied_score(desc.base.iter().map(String::as_str), level))
        .unwrap_or(NEUTRAL_SCORE)
}

/// Indices ordered by decreasing score; ties keep the earlier index first.
fn order_by(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

impl ScriptedMock {
    pub fn new(rules: MockRules) -> Self {
        Self { rules }
    }

    pub fn complete(&self, transcript: &Transcript) -> Result<ChatMessage, LlmError> {
        let last = transcript.messages().last().ok_or(LlmError::NotAwaitingReply)?;
        let text = transcript.resolve(&last.content);
        let reply = if text.starts_with(DESCRIBE_RANK_INSTRUCTION) {
            self.describe_rank(&text)
        } else if text.starts_with(DESCRIBE_INSTRUCTION) {
            self.describe(&text)
        } else if text.contains(GUESS_QUESTION) {
            self.guess(&text)
        } else if text.starts_with(SORT_INSTRUCTION_PREFIX) {
            self.sort(&text)
        } else {
            None
        };
        Ok(ChatMessage::new(
            Role::Assistant,
            reply.unwrap_or_else(|| FALLBACK_REPLY.to_owned()),
        ))
    }

    fn describe(&self, text: &str) -> Option<String> {
        let line = text.lines().find(|l| l.starts_with("Object "))?;
        let (head, reading) = line.split_once(": ")?;
        Some(format!("{head}: {}.", words(reading).join(", ")))
    }

    fn describe_rank(&self, text: &str) -> Option<String> {
        let mut out = Vec::new();
        let mut parts: Vec<(String, Vec<String>)> = Vec::new();
        for line in text.lines() {
            if line.starts_with("Object ") {
                out.push(line.to_owned());
            } else if let Some(rest) = line.strip_prefix("Part ") {
                let (id, reading) = rest.split_once(": ")?;
                let w = words(reading);
                out.push(format!("Part {id}: {}", w.join(", ")));
                parts.push((id.to_owned(), w));
            }
        }
        if parts.is_empty() {
            return None;
        }
        for property in Property::ALL {
            let scores: Vec<f64> = parts
                .iter()
                .map(|(_, w)| implied_score(w.iter().map(String::as_str), property.level_of()).unwrap_or(NEUTRAL_SCORE))
                .collect();
            let ids: Vec<&str> = order_by(&scores).into_iter().map(|i| parts[i].0.as_str()).collect();
            out.push(format!("{RANKING_PREFIX}{property}: {}", ids.join(", ")));
        }
        Some(out.join("\n"))
    }

    fn guess(&self, text: &str) -> Option<String> {
        let options = parse_guess_options(text);
        if options.is_empty() {
            return None;
        }
        let desc = read_description(parse_guess_description(text).unwrap_or(""));
        let retrieved = desc
            .similar
            .first()
            .and_then(|s| options.iter().position(|(_, label)| *label == s.label));
        let (index, reason) = match retrieved {
            Some(i) => (i, "it matches the most similar known object"),
            None => {
                let base: BTreeSet<&str> = desc.base.iter().map(String::as_str).collect();
                let overlap = |label: &str| {
                    self.rules
                        .knowledge
                        .get(label)
                        .map_or(0, |adjs| adjs.iter().filter(|a| base.contains(a.as_str())).count())
                };
                let mut best = 0;
                for i in 1..options.len() {
                    if overlap(&options[i].1) > overlap(&options[best].1) {
                        best = i;
                    }
                }
                (best, "its typical feel shares the most adjectives with the description")
            }
        };
        let label = &options[index].1;
        Some(format!(
            "{label} is the most likely option because {reason}.\n{}",
            render_answer(index, label)
        ))
    }

    fn sort(&self, text: &str) -> Option<String> {
        let (property, blocks) = parse_sort_prompt(text).ok()?;
        let descs: Vec<AugmentedDescription> = blocks.iter().map(|b| read_description(b)).collect();
        let scores: Vec<f64> = descs.iter().map(|d| implied(d, property)).collect();
        let mut out: Vec<String> = descs
            .iter()
            .enumerate()
            .map(|(i, d)| format!("Object {}: {}.", i + 1, d.base.join(", ")))
            .collect();
        let order: Vec<usize> = order_by(&scores).into_iter().map(|i| i + 1).collect();
        out.push(render_ranking(property, &order));
        Some(out.join("\n"))
    }
}
