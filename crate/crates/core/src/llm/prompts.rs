//! Canonical prompt texts, their builders, and parsers for prompts and
//! replies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{placeholder, Transcript, TranscriptError};
use crate::adjectives::Property;

pub const SYSTEM_PROMPT: &str = "You are a tactile reasoning assistant. Each tactile video reaches you as the \
adjectives a tactile encoder read from it. A description may be followed by the most similar objects retrieved \
from a tactile database. Use tactile cues and commonsense knowledge, and reply in the exact format requested.";
pub const DESCRIBE_RANK_INSTRUCTION: &str =
    "Describe the objects in the following tactile videos and rank them in decreasing hardness and roughness.";
pub const DESCRIBE_INSTRUCTION: &str = "Describe the object in the following tactile video(s).";
pub const GUESS_QUESTION: &str = "Which option is the object likely to be?";
pub const GUESS_AGAIN_NOTE: &str = "Your previous guess was incorrect. Choose again from the remaining options.";
pub const ANSWER_FORMAT: &str = "Reply with your reasoning, then a final line of the form \"Answer: (X) <option>\".";
pub const SORT_INSTRUCTION_PREFIX: &str = "Describe and rank the objects by their ";
pub const RANKING_PREFIX: &str = "Object parts ranked in decreasing ";
pub const MAX_OPTIONS: usize = 26;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("at least one object is required")]
    NoObjects,
    #[error("object {0} has no parts")]
    EmptyObject(usize),
    #[error("a guess needs at least 2 options, got {0}")]
    TooFewOptions(usize),
    #[error("at most {MAX_OPTIONS} options can be lettered, got {0}")]
    TooManyOptions(usize),
    #[error("option `{0}` is listed twice")]
    DuplicateOption(String),
    #[error("option `{0}` must be a single non-empty line")]
    BadOption(String),
    #[error("malformed text: {0}")]
    Malformed(String),
    #[error("no `{RANKING_PREFIX}{0}` line")]
    MissingRanking(Property),
    #[error("ranking `{0}` is not a permutation of the objects")]
    NotPermutation(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

/// A user turn plus the tactile attachments it references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub content: String,
    pub attachments: Vec<(String, String)>,
}

impl Prompt {
    fn text(content: String) -> Self {
        Self {
            content,
            attachments: Vec::new(),
        }
    }

    /// Attaches the readings and appends the user turn.
    pub fn push_into(&self, t: &mut Transcript) -> Result<(), TranscriptError> {
        let mut staged = t.clone();
        for (token, text) in &self.attachments {
            staged.attach(token, text.clone())?;
        }
        staged.push_user(self.content.clone())?;
        *t = staged;
        Ok(())
    }

    /// A fresh transcript: system prompt, then this turn.
    pub fn transcript(&self) -> Result<Transcript, TranscriptError> {
        let mut t = Transcript::with_system(SYSTEM_PROMPT)?;
        self.push_into(&mut t)?;
        Ok(t)
    }
}

pub fn option_letter(index: usize) -> char {
    assert!(index < MAX_OPTIONS, "option index {index} out of range");
    (b'A' + index as u8) as char
}

/// Describe-and-rank over objects made of parts; `objects[n][m]` is the
/// reading of part `n+1.m+1`.
pub fn build_describe_rank_prompt(objects: &[Vec<String>]) -> Result<Prompt, PromptError> {
    if objects.is_empty() {
        return Err(PromptError::NoObjects);
    }
    let mut content = format!("{DESCRIBE_RANK_INSTRUCTION}\n");
    let mut attachments = Vec::new();
    for (n, parts) in objects.iter().enumerate() {
        if parts.is_empty() {
            return Err(PromptError::EmptyObject(n + 1));
        }
        content.push_str(&format!("\nObject {}", n + 1));
        for (m, reading) in parts.iter().enumerate() {
            let token = placeholder(&format!("{}.{}", n + 1, m + 1));
            content.push_str(&format!("\nPart {}.{}: {token}", n + 1, m + 1));
            attachments.push((token, reading.clone()));
        }
    }
    Ok(Prompt { content, attachments })
}

/// Part counts per object recovered from a describe-and-rank prompt.
pub fn parse_describe_rank_prompt(content: &str) -> Result<Vec<usize>, PromptError> {
    let body = content
        .strip_prefix(DESCRIBE_RANK_INSTRUCTION)
        .and_then(|b| b.strip_prefix('\n'))
        .ok_or_else(|| PromptError::Malformed("missing describe-and-rank instruction".into()))?;
    let mut shape: Vec<usize> = Vec::new();
    for line in body.lines().filter(|l| !l.is_empty()) {
        if let Some(n) = line.strip_prefix("Object ") {
            if n.parse::<usize>().ok() != Some(shape.len() + 1) {
                return Err(PromptError::Malformed(format!("unexpected `{line}`")));
            }
            shape.push(0);
        } else if let Some(rest) = line.strip_prefix("Part ") {
            let (id, _) = rest
                .split_once(": ")
                .ok_or_else(|| PromptError::Malformed(format!("unexpected `{line}`")))?;
            let n = shape.len();
            let Some(count) = shape.last_mut() else {
                return Err(PromptError::Malformed(format!("`{line}` before any object")));
            };
            if id != format!("{n}.{}", *count + 1) {
                return Err(PromptError::Malformed(format!("part `{id}` out of order")));
            }
            *count += 1;
        } else {
            return Err(PromptError::Malformed(format!("unexpected `{line}`")));
        }
    }
    match shape.iter().position(|&c| c == 0) {
        _ if shape.is_empty() => Err(PromptError::NoObjects),
        Some(i) => Err(PromptError::EmptyObject(i + 1)),
        None => Ok(shape),
    }
}

/// Parts in decreasing order of `property` from a describe-and-rank reply,
/// as 1-based `(object, part)` pairs covering `shape` exactly.
pub fn parse_part_ranking(
    reply: &str,
    property: Property,
    shape: &[usize],
) -> Result<Vec<(usize, usize)>, PromptError> {
    let list = ranking_line(reply, property)?;
    let ranked = list
        .split(", ")
        .map(|id| {
            let (o, p) = id.split_once('.')?;
            Some((o.parse().ok()?, p.parse().ok()?))
        })
        .collect::<Option<Vec<(usize, usize)>>>()
        .ok_or_else(|| PromptError::NotPermutation(list.to_owned()))?;
    let expected: BTreeSet<(usize, usize)> = shape
        .iter()
        .enumerate()
        .flat_map(|(o, &n)| (1..=n).map(move |p| (o + 1, p)))
        .collect();
    let got: BTreeSet<_> = ranked.iter().copied().collect();
    if got != expected || ranked.len() != expected.len() {
        return Err(PromptError::NotPermutation(list.to_owned()));
    }
    Ok(ranked)
}

/// Describe one touched object; the reading is attached as `[tactile:<n>]`.
pub fn build_describe_prompt(object_number: usize, reading: &str) -> Prompt {
    let token = placeholder(&object_number.to_string());
    Prompt {
        content: format!("{DESCRIBE_INSTRUCTION}\n\nObject {object_number}: {token}"),
        attachments: vec![(token, reading.to_owned())],
    }
}

/// `(object number, adjectives)` from a reply line `Object n: a, b, c.`
pub fn parse_description(reply: &str) -> Result<(usize, Vec<String>), PromptError> {
    let line = reply
        .lines()
        .find(|l| l.starts_with("Object "))
        .ok_or_else(|| PromptError::Malformed("no `Object n:` line".into()))?;
    let (head, words) = line["Object ".len()..]
        .split_once(':')
        .ok_or_else(|| PromptError::Malformed(format!("no colon in `{line}`")))?;
    let n = head
        .trim()
        .parse()
        .map_err(|_| PromptError::Malformed(format!("bad object number in `{line}`")))?;
    let words = words.trim().trim_end_matches('.');
    let adjectives = words
        .split(',')
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>();
    if adjectives.is_empty() {
        return Err(PromptError::Malformed(format!("no adjectives in `{line}`")));
    }
    Ok((n, adjectives))
}

/// A lettered multiple-choice prompt and the labels behind its letters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessPrompt {
    pub prompt: Prompt,
    pub options: Vec<String>,
}

/// Multiple-choice guess over `candidates` minus `excluded`, lettered
/// densely from `A` in the given order.
pub fn build_guess_prompt(
    object_number: usize,
    candidates: &[String],
    description: &str,
    excluded: &[String],
) -> Result<GuessPrompt, PromptError> {
    let mut seen = BTreeSet::new();
    for c in candidates {
        if c.trim().is_empty() || c.contains('\n') || c != c.trim() {
            return Err(PromptError::BadOption(c.clone()));
        }
        if !seen.insert(c.as_str()) {
            return Err(PromptError::DuplicateOption(c.clone()));
        }
    }
    let options: Vec<String> = candidates.iter().filter(|c| !excluded.contains(c)).cloned().collect();
    if options.len() < 2 {
        return Err(PromptError::TooFewOptions(options.len()));
    }
    if options.len() > MAX_OPTIONS {
        return Err(PromptError::TooManyOptions(options.len()));
    }
    let mut content = format!("Object {object_number}: {description}\n\n");
    if options.len() < candidates.len() {
        content.push_str(GUESS_AGAIN_NOTE);
        content.push('\n');
    }
    content.push_str(GUESS_QUESTION);
    for (i, o) in options.iter().enumerate() {
        content.push_str(&format!("\n{}) {o}", option_letter(i)));
    }
    content.push_str(&format!("\n{ANSWER_FORMAT}"));
    Ok(GuessPrompt {
        prompt: Prompt::text(content),
        options,
    })
}

/// Options `(letter, label)` listed in a guess prompt.
pub fn parse_guess_options(content: &str) -> Vec<(char, String)> {
    let Some((_, tail)) = content.split_once(GUESS_QUESTION) else {
        return Vec::new();
    };
    tail.lines()
        .filter_map(|l| {
            let mut chars = l.chars();
            let letter = chars.next().filter(char::is_ascii_uppercase)?;
            let label = chars.as_str().strip_prefix(") ")?;
            Some((letter, label.to_owned()))
        })
        .collect()
}

/// The description block of a guess prompt (text after `Object n: `).
pub fn parse_guess_description(content: &str) -> Option<&str> {
    let head = content.split("\n\n").next()?;
    let (_, desc) = head.strip_prefix("Object ")?.split_once(": ")?;
    Some(desc)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnswerError {
    #[error("a guess needs at least 2 options, got {0}")]
    TooFewOptions(usize),
    #[error("answer ({letter}) is not one of the {options} options")]
    OutOfRange { letter: char, options: usize },
    #[error("no answer letter found in reply")]
    NoAnswer,
}

/// Canonical final answer line for option `index`.
pub fn render_answer(index: usize, label: &str) -> String {
    format!("Answer: ({}) {label}", option_letter(index))
}

/// Option index from a free-text reply: the first `Answer: (X)`
/// (case-insensitive), else the first standalone in-range capital letter.
pub fn parse_answer(reply: &str, num_options: usize) -> Result<usize, AnswerError> {
    if num_options < 2 {
        return Err(AnswerError::TooFewOptions(num_options));
    }
    let lower = reply.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut from = 0;
    while let Some(at) = lower[from..].find("answer:") {
        let mut i = from + at + "answer:".len();
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        if i + 2 < bytes.len() && bytes[i] == b'(' && bytes[i + 1].is_ascii_lowercase() && bytes[i + 2] == b')' {
            let index = (bytes[i + 1] - b'a') as usize;
            if index >= num_options {
                return Err(AnswerError::OutOfRange {
                    letter: bytes[i + 1].to_ascii_uppercase() as char,
                    options: num_options,
                });
            }
            return Ok(index);
        }
        from = i;
    }
    let raw = reply.as_bytes();
    for (i, &b) in raw.iter().enumerate() {
        if !b.is_ascii_uppercase() {
            continue;
        }
        let before = i == 0 || !raw[i - 1].is_ascii_alphanumeric();
        let after = i + 1 == raw.len() || !raw[i + 1].is_ascii_alphanumeric();
        let index = (b - b'A') as usize;
        if before && after && index < num_options {
            return Ok(index);
        }
    }
    Err(AnswerError::NoAnswer)
}

/// Sorting over already-described objects, numbered from 1 in order.
pub fn build_sort_prompt(descriptions: &[String], property: Property) -> Result<Prompt, PromptError> {
    if descriptions.is_empty() {
        return Err(PromptError::NoObjects);
    }
    let mut content = format!("{SORT_INSTRUCTION_PREFIX}{property}.\n");
    for (i, d) in descriptions.iter().enumerate() {
        content.push_str(&format!("\nObject {}: {d}", i + 1));
    }
    Ok(Prompt::text(content))
}

/// Property and per-object description blocks from a sort prompt.
pub fn parse_sort_prompt(content: &str) -> Result<(Property, Vec<String>), PromptError> {
    let rest = content
        .strip_prefix(SORT_INSTRUCTION_PREFIX)
        .ok_or_else(|| PromptError::Malformed("missing sort instruction".into()))?;
    let (prop, body) = rest
        .split_once(".\n")
        .ok_or_else(|| PromptError::Malformed("missing sort instruction".into()))?;
    let property: Property = prop.parse().map_err(PromptError::Malformed)?;
    let mut blocks: Vec<String> = Vec::new();
    for line in body.lines().filter(|l| !l.is_empty()) {
        let next = format!("Object {}: ", blocks.len() + 1);
        if let Some(desc) = line.strip_prefix(&next) {
            blocks.push(desc.to_owned());
        } else if let Some(last) = blocks.last_mut() {
            last.push('\n');
            last.push_str(line);
        } else {
            return Err(PromptError::Malformed(format!("unexpected `{line}`")));
        }
    }
    if blocks.is_empty() {
        return Err(PromptError::NoObjects);
    }
    Ok((property, blocks))
}

/// `Object parts ranked in decreasing <property>: 2 > 1 > 3`
pub fn render_ranking(property: Property, order: &[usize]) -> String {
    let list: Vec<String> = order.iter().map(usize::to_string).collect();
    format!("{RANKING_PREFIX}{property}: {}", list.join(" > "))
}

fn ranking_line(reply: &str, property: Property) -> Result<&str, PromptError> {
    let prefix = format!("{RANKING_PREFIX}{property}:");
    reply
        .lines()
        .find_map(|l| l.trim().strip_prefix(&prefix))
        .map(str::trim)
        .ok_or(PromptError::MissingRanking(property))
}

/// 1-based object numbers in decreasing `property`; must be a permutation
/// of `1..=n`.
pub fn parse_ranking(reply: &str, property: Property, n: usize) -> Result<Vec<usize>, PromptError> {
    let list = ranking_line(reply, property)?;
    let order = list
        .split('>')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| PromptError::NotPermutation(list.to_owned()))?;
    let set: BTreeSet<usize> = order.iter().copied().collect();
    if order.len() != n || set != (1..=n).collect() {
        return Err(PromptError::NotPermutation(list.to_owned()));
    }
    Ok(order)
}
