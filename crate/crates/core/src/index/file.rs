//! Index file: one UTF-8 JSON document.
//!
//! ```json
//! {
//!   "format": "octo-tactile-index",
//!   "version": 1,
//!   "dim": 16,
//!   "entries": [{"sample_id": "...", "object_id": "...", "part_id": "...",
//!                "label": "...", "adjectives": [...], "pad_type": "plain",
//!                "embedding_bits": [1056964608, ...]}]
//! }
//! ```
//!
//! `embedding_bits` holds the IEEE-754 bit pattern of each `f32` component.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{IndexEntry, IndexError, TactileIndex};
use crate::embedding::Embedding;
use crate::tactile::PadType;

pub const INDEX_FORMAT: &str = "octo-tactile-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexFileError {
    #[error("not a tactile index file (format `{0}`)")]
    WrongFormat(String),
    #[error("unsupported index file version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt index: {0}")]
    Corrupt(#[from] IndexError),
    #[error("malformed index file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    dim: usize,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    sample_id: String,
    object_id: String,
    part_id: String,
    label: String,
    adjectives: Vec<String>,
    pad_type: PadType,
    embedding_bits: Vec<u32>,
}

pub fn index_to_json(index: &TactileIndex) -> String {
    let file = IndexFile {
        format: INDEX_FORMAT.to_owned(),
        version: INDEX_VERSION,
        dim: index.dim(),
        entries: index
            .entries()
            .iter()
            .map(|e| EntryFile {
                sample_id: e.sample_id.clone(),
                object_id: e.object_id.clone(),
                part_id: e.part_id.clone(),
                label: e.label.clone(),
                adjectives: e.adjectives.clone(),
                pad_type: e.pad_type,
                embedding_bits: e.embedding.0.iter().map(|v| v.to_bits()).collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("index serializes");
    text.push('\n');
    text
}

pub fn index_from_json(text: &str) -> Result<TactileIndex, IndexFileError> {
    let file: IndexFile = serde_json::from_str(text)?;
    if file.format != INDEX_FORMAT {
        return Err(IndexFileError::WrongFormat(file.format));
    }
    if file.version != INDEX_VERSION {
        return Err(IndexFileError::UnsupportedVersion(file.version));
    }
    let mut index = TactileIndex::new(file.dim);
    for e in file.entries {
        index.insert(IndexEntry {
            sample_id: e.sample_id,
            object_id: e.object_id,
            part_id: e.part_id,
            label: e.label,
            adjectives: e.adjectives,
            pad_type: e.pad_type,
            embedding: Embedding(e.embedding_bits.into_iter().map(f32::from_bits).collect()),
        })?;
    }
    Ok(index)
}

pub fn save_index(index: &TactileIndex, path: &Path) -> Result<(), IndexFileError> {
    fs::write(path, index_to_json(index)).map_err(|error| IndexFileError::Io {
        path: path.display().to_string(),
        error,
    })
}

pub fn load_index(path: &Path) -> Result<TactileIndex, IndexFileError> {
    let text = fs::read_to_string(path).map_err(|error| IndexFileError::Io {
        path: path.display().to_string(),
        error,
    })?;
    index_from_json(&text)
}
