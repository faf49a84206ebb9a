//! On-disk dataset layout.
//!
//! A dataset directory holds a `manifest` (UTF-8 JSON) and one
//! `<sample_id>.tact` per video. A `.tact` file is:
//!
//! ```text
//! b"TACT" 0x01
//! u32 LE height | u32 LE width | u32 LE frame_count
//! u8 pad_type (0 = plain, 1 = dotted)
//! frame_count * height * width  f32 LE, row-major, frames in temporal order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::GeneratorSpec;
use crate::tactile::{Dataset, ObjectRecord, PadType, Split, TactileError, TactileFrame, TactileVideo};

pub const TACT_MAGIC: &[u8; 4] = b"TACT";
pub const TACT_VERSION: u8 = 0x01;
pub const MANIFEST_FILE: &str = "manifest";
pub const MANIFEST_VERSION: u32 = 1;
const TACT_HEADER_LEN: usize = 4 + 1 + 12 + 1;

#[derive(Debug, Error)]
pub enum DatasetIoError {
    #[error("bad magic bytes {found:?} in {path}")]
    BadMagic { path: String, found: Vec<u8> },
    #[error("unsupported .tact version {found} in {path}")]
    UnsupportedTactVersion { path: String, found: u8 },
    #[error("unknown pad type byte {found} in {path}")]
    BadPadType { path: String, found: u8 },
    #[error("truncated {what} in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{path} has {extra} trailing bytes after the frame payload")]
    TrailingBytes { path: String, extra: usize },
    #[error("sample `{sample_id}` references unknown object/part `{object_id}`/`{part_id}`")]
    DanglingReference {
        sample_id: String,
        object_id: String,
        part_id: String,
    },
    #[error("manifest version {found} is not supported (expected {MANIFEST_VERSION})")]
    UnsupportedManifestVersion { found: u32 },
    #[error("manifest pad type for `{sample_id}` is {manifest} but its .tact file says {file}")]
    PadMismatch {
        sample_id: String,
        manifest: PadType,
        file: PadType,
    },
    #[error("invalid dataset: {0}")]
    Invalid(#[from] TactileError),
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetIoError + '_ {
    move |error| DatasetIoError::Io {
        path: path.display().to_string(),
        error,
    }
}

/// Encodes a video's frames in the `.tact` format.
pub fn encode_tact(video: &TactileVideo) -> Result<Vec<u8>, TactileError> {
    video.validate()?;
    let (h, w) = video.frame_dims().expect("validated video has frames");
    let frames = video.frames();
    let mut out = Vec::with_capacity(TACT_HEADER_LEN + frames.len() * frames[0].len() * 4);
    out.extend_from_slice(TACT_MAGIC);
    out.push(TACT_VERSION);
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    out.push(video.pad_type.to_byte());
    for f in frames {
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decoded `.tact` payload: frames plus pad type.
#[derive(Debug, Clone, PartialEq)]
pub struct TactPayload {
    pub pad_type: PadType,
    pub frames: Vec<TactileFrame>,
}

impl TactPayload {
    pub fn into_video(
        self,
        sample_id: impl Into<String>,
        object_id: impl Into<String>,
        part_id: impl Into<String>,
    ) -> Result<TactileVideo, TactileError> {
        TactileVideo::new(sample_id, object_id, part_id, self.pad_type, self.frames)
    }
}

/// Decodes `.tact` bytes; `origin` only labels errors.
pub fn decode_tact(bytes: &[u8], origin: &str) -> Result<TactPayload, DatasetIoError> {
    let path = origin.to_owned();
    if bytes.len() < 4 || &bytes[..4] != TACT_MAGIC {
        return Err(DatasetIoError::BadMagic {
            path,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < TACT_HEADER_LEN {
        return Err(DatasetIoError::Truncated {
            path,
            what: "header",
            expected: TACT_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != TACT_VERSION {
        return Err(DatasetIoError::UnsupportedTactVersion { path, found: bytes[4] });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let (h, w, n) = (word(5), word(9), word(13));
    let pad_type = PadType::from_byte(bytes[17]).ok_or(DatasetIoError::BadPadType {
        path: path.clone(),
        found: bytes[17],
    })?;
    let per_frame = h as usize * w as usize;
    let expected = n as usize * per_frame * 4;
    let payload = &bytes[TACT_HEADER_LEN..];
    if payload.len() < expected {
        return Err(DatasetIoError::Truncated {
            path,
            what: "frame payload",
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(DatasetIoError::TrailingBytes {
            path,
            extra: payload.len() - expected,
        });
    }
    let frames = payload
        .chunks_exact(per_frame * 4)
        .map(|chunk| {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            TactileFrame::new(h, w, values)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if frames.is_empty() {
        return Err(TactileError::EmptyVideo(path).into());
    }
    Ok(TactPayload { pad_type, frames })
}

pub fn read_tact(path: &Path) -> Result<TactPayload, DatasetIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_tact(&bytes, &path.display().to_string())
}

pub fn write_tact(video: &TactileVideo, path: &Path) -> Result<(), DatasetIoError> {
    let bytes = encode_tact(video)?;
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    seed: u64,
    generator: Option<GeneratorSpec>,
    objects: Vec<ObjectRecord>,
    samples: Vec<ManifestSample>,
    split: BTreeMap<String, Split>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSample {
    sample_id: String,
    object_id: String,
    part_id: String,
    pad_type: PadType,
}

pub fn tact_path(dir: &Path, sample_id: &str) -> PathBuf {
    dir.join(format!("{sample_id}.tact"))
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetIoError> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: dataset.seed,
        generator: dataset.generator.clone(),
        objects: dataset.objects.clone(),
        samples: dataset
            .videos
            .iter()
            .map(|v| ManifestSample {
                sample_id: v.sample_id.clone(),
                object_id: v.object_id.clone(),
                part_id: v.part_id.clone(),
                pad_type: v.pad_type,
            })
            .collect(),
        split: dataset.split.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    for v in &dataset.videos {
        write_tact(v, &tact_path(dir, &v.sample_id))?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetIoError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(DatasetIoError::UnsupportedManifestVersion {
            found: manifest.version,
        });
    }
    let mut videos = Vec::with_capacity(manifest.samples.len());
    for s in manifest.samples {
        let resolves = manifest
            .objects
            .iter()
            .find(|o| o.object_id == s.object_id)
            .and_then(|o| o.part(&s.part_id))
            .is_some();
        if !resolves {
            return Err(DatasetIoError::DanglingReference {
                sample_id: s.sample_id,
                object_id: s.object_id,
                part_id: s.part_id,
            });
        }
        let payload = read_tact(&tact_path(dir, &s.sample_id))?;
        if payload.pad_type != s.pad_type {
            return Err(DatasetIoError::PadMismatch {
                sample_id: s.sample_id,
                manifest: s.pad_type,
                file: payload.pad_type,
            });
        }
        videos.push(payload.into_video(s.sample_id, s.object_id, s.part_id)?);
    }
    let dataset = Dataset {
        objects: manifest.objects,
        videos,
        split: manifest.split,
        seed: manifest.seed,
        generator: manifest.generator,
    };
    dataset.validate()?;
    Ok(dataset)
}
