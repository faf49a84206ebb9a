//! Model file: one UTF-8 JSON document.
//!
//! ```json
//! {
//!   "format": "octo-tactile-encoder",
//!   "version": 1,
//!   "dims": {"input_height": 16, "input_width": 16, "hidden": 32, "embed": 16},
//!   "meta": {"init_seed": 7, "train_config": {...} | null, "best_epoch": 12 | null},
//!   "param_encoding": "base64-f32le",
//!   "blocks": [{"name": "w1", "rows": 32, "cols": 256, "data": "<base64>"}, ...]
//! }
//! ```
//!
//! Blocks appear in the order w1, b1, w2, b2, head_w, head_b. Each `data`
//! string is standard base64 of the block's row-major little-endian `f32`
//! values.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EncoderDims, EncoderModel, ModelMeta};

pub const MODEL_FORMAT: &str = "octo-tactile-encoder";
pub const MODEL_VERSION: u32 = 1;
const PARAM_ENCODING: &str = "base64-f32le";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a tactile encoder file (format `{0}`)")]
    WrongFormat(String),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported parameter encoding `{0}`")]
    UnsupportedEncoding(String),
    #[error("block {index} is `{found}` with shape {rows}x{cols}, expected `{expected}` {exp_rows}x{exp_cols}")]
    BlockMismatch {
        index: usize,
        found: String,
        rows: usize,
        cols: usize,
        expected: &'static str,
        exp_rows: usize,
        exp_cols: usize,
    },
    #[error("block `{name}` payload holds {found} bytes, expected {expected}")]
    BadPayload {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("block `{0}` is not valid base64")]
    Base64(String),
    #[error("model contains non-finite parameters")]
    NonFinite,
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dims: EncoderDims,
    meta: ModelMeta,
    param_encoding: String,
    blocks: Vec<BlockFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockFile {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

pub fn model_to_json(model: &EncoderModel) -> String {
    let dims = model.dims();
    let mut offset = 0;
    let blocks = dims
        .blocks()
        .iter()
        .map(|&(name, rows, cols)| {
            let values = &model.raw_params()[offset..offset + rows * cols];
            offset += rows * cols;
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            BlockFile {
                name: name.to_owned(),
                rows,
                cols,
                data: STANDARD.encode(bytes),
            }
        })
        .collect();
    let file = ModelFile {
        format: MODEL_FORMAT.to_owned(),
        version: MODEL_VERSION,
        dims,
        meta: model.meta.clone(),
        param_encoding: PARAM_ENCODING.to_owned(),
        blocks,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    text
}

pub fn model_from_json(text: &str) -> Result<EncoderModel, ModelFileError> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format != MODEL_FORMAT {
        return Err(ModelFileError::WrongFormat(file.format));
    }
    if file.version != MODEL_VERSION {
        return Err(ModelFileError::UnsupportedVersion(file.version));
    }
    if file.param_encoding != PARAM_ENCODING {
        return Err(ModelFileError::UnsupportedEncoding(file.param_encoding));
    }
    let expected = file.dims.blocks();
    if file.blocks.len() != expected.len() {
        return Err(ModelFileError::BlockMismatch {
            index: file.blocks.len().min(expected.len()),
            found: "<missing or extra>".into(),
            rows: 0,
            cols: 0,
            expected: expected.get(file.blocks.len()).map_or("<none>", |b| b.0),
            exp_rows: 0,
            exp_cols: 0,
        });
    }
    let mut params = Vec::with_capacity(file.dims.param_count());
    for (index, (block, &(name, rows, cols))) in file.blocks.iter().zip(&expected).enumerate() {
        if block.name != name || block.rows != rows || block.cols != cols {
            return Err(ModelFileError::BlockMismatch {
                index,
                found: block.name.clone(),
                rows: block.rows,
                cols: block.cols,
                expected: name,
                exp_rows: rows,
                exp_cols: cols,
            });
        }
        let bytes = STANDARD
            .decode(&block.data)
            .map_err(|_| ModelFileError::Base64(block.name.clone()))?;
        if bytes.len() != rows * cols * 4 {
            return Err(ModelFileError::BadPayload {
                name: block.name.clone(),
                expected: rows * cols * 4,
                found: bytes.len(),
            });
        }
        params.extend(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())));
    }
    let model = EncoderModel::from_raw(file.dims, params, file.meta);
    if !model.is_finite() {
        return Err(ModelFileError::NonFinite);
    }
    Ok(model)
}

pub fn save_model(model: &EncoderModel, path: &Path) -> Result<(), ModelFileError> {
    fs::write(path, model_to_json(model)).map_err(|error| ModelFileError::Io {
        path: path.display().to_string(),
        error,
    })
}

pub fn load_model(path: &Path) -> Result<EncoderModel, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|error| ModelFileError::Io {
        path: path.display().to_string(),
        error,
    })?;
    model_from_json(&text)
}
