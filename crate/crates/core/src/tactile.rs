//! Domain types for tactile recordings and their ground-truth labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::GeneratorSpec;

#[derive(Debug, Error, PartialEq)]
pub enum TactileError {
    #[error("frame grid must be non-empty, got {height}x{width}")]
    EmptyGrid { height: u32, width: u32 },
    #[error("frame declares {height}x{width} but holds {len} values")]
    GridSizeMismatch { height: u32, width: u32, len: usize },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f32 },
    #[error("video `{0}` has no frames")]
    EmptyVideo(String),
    #[error("video `{sample_id}` mixes frame sizes: {expected:?} vs {found:?}")]
    MixedFrameSizes {
        sample_id: String,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("duplicate part id `{part_id}` in object `{object_id}`")]
    DuplicatePart { object_id: String, part_id: String },
    #[error("duplicate object id `{0}`")]
    DuplicateObject(String),
    #[error("object `{0}` has no parts")]
    NoParts(String),
    #[error("score {value} for `{field}` is outside [0, 10]")]
    ScoreOutOfRange { field: &'static str, value: f64 },
    #[error("part `{0}` has no adjectives")]
    NoAdjectives(String),
    #[error("adjective `{0}` must be a lowercase token")]
    BadAdjective(String),
    #[error("sample `{sample_id}` references unknown object/part `{object_id}`/`{part_id}`")]
    DanglingReference {
        sample_id: String,
        object_id: String,
        part_id: String,
    },
    #[error("split map references unknown sample `{0}`")]
    UnknownSplitSample(String),
    #[error("sample `{0}` has no split assignment")]
    MissingSplit(String),
    #[error("object `{0}` appears in both train and val splits")]
    SplitLeak(String),
}

/// Single-channel tactile image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    height: u32,
    width: u32,
    values: Vec<f32>,
}

impl TactileFrame {
    pub fn new(height: u32, width: u32, values: Vec<f32>) -> Result<Self, TactileError> {
        if height == 0 || width == 0 {
            return Err(TactileError::EmptyGrid { height, width });
        }
        if values.len() != (height as usize) * (width as usize) {
            return Err(TactileError::GridSizeMismatch {
                height,
                width,
                len: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(TactileError::IntensityOutOfRange { index, value });
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height as usize * width as usize],
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: u32, col: u32) -> f32 {
        self.values[row as usize * self.width as usize + col as usize]
    }
}

/// GelSight silicone pad variant. Serialized as a single byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadType {
    Plain,
    Dotted,
}

impl PadType {
    pub fn to_byte(self) -> u8 {
        match self {
            PadType::Plain => 0,
            PadType::Dotted => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(PadType::Plain),
            1 => Some(PadType::Dotted),
            _ => None,
        }
    }
}

impl fmt::Display for PadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PadType::Plain => "plain",
            PadType::Dotted => "dotted",
        })
    }
}

/// One recorded press: an ordered, non-empty sequence of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileVideo {
    pub sample_id: String,
    pub object_id: String,
    pub part_id: String,
    pub pad_type: PadType,
    frames: Vec<TactileFrame>,
}

impl TactileVideo {
    pub fn new(
        sample_id: impl Into<String>,
        object_id: impl Into<String>,
        part_id: impl Into<String>,
        pad_type: PadType,
        frames: Vec<TactileFrame>,
    ) -> Result<Self, TactileError> {
        let sample_id = sample_id.into();
        let Some(first) = frames.first() else {
            return Err(TactileError::EmptyVideo(sample_id));
        };
        let expected = first.dims();
        if let Some(bad) = frames.iter().find(|f| f.dims() != expected) {
            return Err(TactileError::MixedFrameSizes {
                sample_id,
                expected,
                found: bad.dims(),
            });
        }
        Ok(Self {
            sample_id,
            object_id: object_id.into(),
            part_id: part_id.into(),
            pad_type,
            frames,
        })
    }

    /// Builds a video without checking invariants. Writers re-validate.
    pub fn new_unchecked(
        sample_id: impl Into<String>,
        object_id: impl Into<String>,
        part_id: impl Into<String>,
        pad_type: PadType,
        frames: Vec<TactileFrame>,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            object_id: object_id.into(),
            part_id: part_id.into(),
            pad_type,
            frames,
        }
    }

    pub fn frames(&self) -> &[TactileFrame] {
        &self.frames
    }

    pub fn frame_dims(&self) -> Option<(u32, u32)> {
        self.frames.first().map(TactileFrame::dims)
    }

    pub fn validate(&self) -> Result<(), TactileError> {
        let Some(first) = self.frames.first() else {
            return Err(TactileError::EmptyVideo(self.sample_id.clone()));
        };
        for f in &self.frames {
            if f.dims() != first.dims() {
                return Err(TactileError::MixedFrameSizes {
                    sample_id: self.sample_id.clone(),
                    expected: first.dims(),
                    found: f.dims(),
                });
            }
        }
        Ok(())
    }
}

/// Ground truth for one object part on the 0-10 annotation scale
/// (0 = cotton wool / ice, 10 = rock / toothbrush bristles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub part_id: String,
    pub hardness: f64,
    pub roughness: f64,
    pub adjectives: Vec<String>,
}

impl PartRecord {
    pub fn validate(&self) -> Result<(), TactileError> {
        for (field, value) in [("hardness", self.hardness), ("roughness", self.roughness)] {
            if !(0.0..=10.0).contains(&value) {
                return Err(TactileError::ScoreOutOfRange { field, value });
            }
        }
        if self.adjectives.is_empty() {
            return Err(TactileError::NoAdjectives(self.part_id.clone()));
        }
        let mut seen = BTreeSet::new();
        for adj in &self.adjectives {
            let ok = !adj.is_empty() && adj.chars().all(|c| c.is_ascii_lowercase() || c == '-' || c == ' ');
            if !ok || !seen.insert(adj) {
                return Err(TactileError::BadAdjective(adj.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub object_id: String,
    pub label: String,
    pub parts: Vec<PartRecord>,
}

impl ObjectRecord {
    pub fn part(&self, part_id: &str) -> Option<&PartRecord> {
        self.parts.iter().find(|p| p.part_id == part_id)
    }

    /// Union of all part adjectives, in first-seen order.
    pub fn adjectives(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for adj in self.parts.iter().flat_map(|p| &p.adjectives) {
            if !out.contains(adj) {
                out.push(adj.clone());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), TactileError> {
        if self.parts.is_empty() {
            return Err(TactileError::NoParts(self.object_id.clone()));
        }
        let mut ids = BTreeSet::new();
        for p in &self.parts {
            if !ids.insert(&p.part_id) {
                return Err(TactileError::DuplicatePart {
                    object_id: self.object_id.clone(),
                    part_id: p.part_id.clone(),
                });
            }
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub objects: Vec<ObjectRecord>,
    pub videos: Vec<TactileVideo>,
    pub split: BTreeMap<String, Split>,
    pub seed: u64,
    /// Present when the dataset came from the synthetic generator.
    pub generator: Option<GeneratorSpec>,
}

impl Dataset {
    pub fn object(&self, object_id: &str) -> Option<&ObjectRecord> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    pub fn part_of(&self, video: &TactileVideo) -> Option<&PartRecord> {
        self.object(&video.object_id)?.part(&video.part_id)
    }

    pub fn video(&self, sample_id: &str) -> Option<&TactileVideo> {
        self.videos.iter().find(|v| v.sample_id == sample_id)
    }

    pub fn split_of(&self, sample_id: &str) -> Option<Split> {
        self.split.get(sample_id).copied()
    }

    pub fn videos_in(&self, split: Split) -> impl Iterator<Item = &TactileVideo> {
        self.videos
            .iter()
            .filter(move |v| self.split.get(&v.sample_id) == Some(&split))
    }

    /// Object ids having at least one sample in `split`, sorted.
    pub fn objects_in(&self, split: Split) -> BTreeSet<String> {
        self.videos_in(split).map(|v| v.object_id.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), TactileError> {
        let mut object_ids = BTreeSet::new();
        for o in &self.objects {
            if !object_ids.insert(&o.object_id) {
                return Err(TactileError::DuplicateObject(o.object_id.clone()));
            }
            o.validate()?;
        }
        let mut sample_ids = BTreeSet::new();
        for v in &self.videos {
            v.validate()?;
            if !sample_ids.insert(v.sample_id.as_str()) {
                return Err(TactileError::DuplicateSample(v.sample_id.clone()));
            }
            if self.part_of(v).is_none() {
                return Err(TactileError::DanglingReference {
                    sample_id: v.sample_id.clone(),
                    object_id: v.object_id.clone(),
                    part_id: v.part_id.clone(),
                });
            }
            if !self.split.contains_key(&v.sample_id) {
                return Err(TactileError::MissingSplit(v.sample_id.clone()));
            }
        }
        if let Some(id) = self.split.keys().find(|k| !sample_ids.contains(k.as_str())) {
            return Err(TactileError::UnknownSplitSample(id.clone()));
        }
        let train = self.objects_in(Split::Train);
        if let Some(leak) = self.objects_in(Split::Val).intersection(&train).next() {
            return Err(TactileError::SplitLeak(leak.clone()));
        }
        Ok(())
    }
}
