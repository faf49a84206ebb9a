//! Trainable tactile encoder.
//!
//! A two-layer feed-forward network maps a flattened frame to a
//! `D`-dimensional embedding:
//!
//! ```text
//! hidden    = tanh(W1 x + b1)
//! embedding = W2 hidden + b2
//! ```
//!
//! A sample (video) is represented by the mean embedding of its salient
//! frames. Two affine heads read that mean embedding and predict hardness
//! and roughness normalized to `[0, 1]`.
//!
//! Parameters are stored as `f32`; all arithmetic runs in `f64`.

mod file;
mod gradcheck;
mod loss;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedding;
use crate::saliency::{select_salient, SaliencyConfig, SaliencyError};
use crate::tactile::{TactileFrame, TactileVideo};

pub use file::{load_model, model_from_json, model_to_json, save_model, ModelFileError};
pub use gradcheck::{check_gradients, random_problem, GradCheckReport, GroupCheck, FD_STEP, GRAD_REL_TOLERANCE};
pub use loss::{gradients, loss, Batch, BatchSample, ClassKey, LossConfig, LossParts, COSINE_EPS};
pub use train::{prepare_samples, train, BatchSampler, EpochLog, TrainConfig, TrainingLog};

pub const DEFAULT_EMBED_DIM: usize = 16;
pub const DEFAULT_HIDDEN_DIM: usize = 32;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("frame is {found:?} but the model expects {expected:?}")]
    DimensionMismatch { expected: (u32, u32), found: (u32, u32) },
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error("sample embedding has zero norm and cannot be normalized")]
    DegenerateEmbedding,
    #[error("batch mixes pad types")]
    MixedPads,
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("no samples in the {0} split")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub input_height: u32,
    pub input_width: u32,
    pub hidden: usize,
    pub embed: usize,
}

impl EncoderDims {
    pub fn new(input_height: u32, input_width: u32, hidden: usize, embed: usize) -> Self {
        Self {
            input_height,
            input_width,
            hidden,
            embed,
        }
    }

    pub fn input(&self) -> usize {
        self.input_height as usize * self.input_width as usize
    }

    /// (name, rows, cols) of every parameter block in storage order.
    pub fn blocks(&self) -> [(&'static str, usize, usize); 6] {
        [
            ("w1", self.hidden, self.input()),
            ("b1", self.hidden, 1),
            ("w2", self.embed, self.hidden),
            ("b2", self.embed, 1),
            ("head_w", 2, self.embed),
            ("head_b", 2, 1),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Flat `f64` parameter (or gradient) vector with named block views.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub dims: EncoderDims,
    pub data: Vec<f64>,
}

impl Params {
    pub fn zeros(dims: EncoderDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.param_count()],
        }
    }

    fn offsets(&self) -> [usize; 7] {
        let mut out = [0; 7];
        for (i, (_, r, c)) in self.dims.blocks().iter().enumerate() {
            out[i + 1] = out[i] + r * c;
        }
        out
    }

    /// Named slices in storage order.
    pub fn groups(&self) -> Vec<(&'static str, &[f64])> {
        let o = self.offsets();
        self.dims
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, (name, _, _))| (*name, &self.data[o[i]..o[i + 1]]))
            .collect()
    }

    pub(crate) fn split(&self) -> ParamView<'_> {
        let o = self.offsets();
        let d = &self.data;
        ParamView {
            dims: self.dims,
            w1: &d[o[0]..o[1]],
            b1: &d[o[1]..o[2]],
            w2: &d[o[2]..o[3]],
            b2: &d[o[3]..o[4]],
            head_w: &d[o[4]..o[5]],
            head_b: &d[o[5]..o[6]],
        }
    }

    pub(crate) fn split_mut(&mut self) -> ParamViewMut<'_> {
        let o = self.offsets();
        let (w1, rest) = self.data.split_at_mut(o[1]);
        let (b1, rest) = rest.split_at_mut(o[2] - o[1]);
        let (w2, rest) = rest.split_at_mut(o[3] - o[2]);
        let (b2, rest) = rest.split_at_mut(o[4] - o[3]);
        let (head_w, head_b) = rest.split_at_mut(o[5] - o[4]);
        ParamViewMut {
            w1,
            b1,
            w2,
            b2,
            head_w,
            head_b,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self -= rate * grad`
    pub fn step(&mut self, grad: &Params, rate: f64) {
        for (p, g) in self.data.iter_mut().zip(&grad.data) {
            *p -= rate * g;
        }
    }
}

pub(crate) struct ParamView<'a> {
    pub dims: EncoderDims,
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
    pub head_w: &'a [f64],
    pub head_b: &'a [f64],
}

pub(crate) struct ParamViewMut<'a> {
    pub w1: &'a mut [f64],
    pub b1: &'a mut [f64],
    pub w2: &'a mut [f64],
    pub b2: &'a mut [f64],
    pub head_w: &'a mut [f64],
    pub head_b: &'a mut [f64],
}

impl ParamView<'_> {
    /// Hidden activations for one flattened frame.
    pub fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.dims.input();
        (0..self.dims.hidden)
            .map(|j| {
                let row = &self.w1[j * n_in..(j + 1) * n_in];
                let z = self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                z.tanh()
            })
            .collect()
    }

    pub fn embed_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        let h = self.dims.hidden;
        (0..self.dims.embed)
            .map(|k| {
                let row = &self.w2[k * h..(k + 1) * h];
                self.b2[k] + row.iter().zip(hidden).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect()
    }

    /// Raw head outputs (normalized hardness, normalized roughness).
    pub fn heads(&self, embedding: &[f64]) -> [f64; 2] {
        let d = self.dims.embed;
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.head_b[i]
                + self.head_w[i * d..(i + 1) * d]
                    .iter()
                    .zip(embedding)
                    .map(|(w, e)| w * e)
                    .sum::<f64>();
        }
        out
    }
}

/// Provenance recorded alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub init_seed: u64,
    pub train_config: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    dims: EncoderDims,
    params: Vec<f32>,
    pub meta: ModelMeta,
}

impl EncoderModel {
    pub fn zeros(dims: EncoderDims) -> Self {
        Self {
            dims,
            params: vec![0.0; dims.param_count()],
            meta: ModelMeta {
                init_seed: 0,
                train_config: None,
                best_epoch: None,
            },
        }
    }

    /// Seeded uniform init in `[-s, s]` with `s = 1/sqrt(fan_in)` per block.
    pub fn init(dims: EncoderDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_ins = [
            dims.input(),
            dims.input(),
            dims.hidden,
            dims.hidden,
            dims.embed,
            dims.embed,
        ];
        let mut params = Vec::with_capacity(dims.param_count());
        for ((_, r, c), fan_in) in dims.blocks().iter().zip(fan_ins) {
            let s = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..r * c).map(|_| rng.random_range(-s..=s) as f32));
        }
        Self {
            dims,
            params,
            meta: ModelMeta {
                init_seed: seed,
                train_config: None,
                best_epoch: None,
            },
        }
    }

    pub fn from_params(params: &Params, meta: ModelMeta) -> Self {
        Self {
            dims: params.dims,
            params: params.data.iter().map(|&v| v as f32).collect(),
            meta,
        }
    }

    pub(crate) fn from_raw(dims: EncoderDims, params: Vec<f32>, meta: ModelMeta) -> Self {
        debug_assert_eq!(params.len(), dims.param_count());
        Self { dims, params, meta }
    }

    pub fn dims(&self) -> EncoderDims {
        self.dims
    }

    pub fn embed_dim(&self) -> usize {
        self.dims.embed
    }

    /// The salient-frame setting the model was trained with.
    pub fn trained_saliency(&self) -> SaliencyConfig {
        self.meta.train_config.as_ref().map(|c| c.saliency).unwrap_or_default()
    }

    pub fn raw_params(&self) -> &[f32] {
        &self.params
    }

    pub fn to_params(&self) -> Params {
        Params {
            dims: self.dims,
            data: self.params.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    fn check_frame(&self, frame: &TactileFrame) -> Result<(), EncoderError> {
        let expected = (self.dims.input_height, self.dims.input_width);
        if frame.dims() != expected {
            return Err(EncoderError::DimensionMismatch {
                expected,
                found: frame.dims(),
            });
        }
        Ok(())
    }

    /// Mean pre-normalization embedding over the salient frames.
    pub fn mean_salient_embedding(&self, video: &TactileVideo, cfg: &SaliencyConfig) -> Result<Vec<f64>, EncoderError> {
        let idx = select_salient(video, cfg)?;
        let frames = video.frames();
        for &i in &idx {
            self.check_frame(&frames[i])?;
        }
        let params = self.to_params();
        let view = params.split();
        let mut mean = vec![0.0; self.dims.embed];
        for &i in &idx {
            let x = frame_input(&frames[i]);
            let e = view.embed_hidden(&view.hidden(&x));
            for (m, v) in mean.iter_mut().zip(e) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= idx.len() as f64;
        }
        Ok(mean)
    }
}

/// Pixel intensities in `[0, 1]` enter the network centred on `[-1, 1]`.
const INPUT_SCALE: f64 = 2.0;

pub(crate) fn frame_input(frame: &TactileFrame) -> Vec<f64> {
    frame.values().iter().map(|&v| INPUT_SCALE * (v as f64 - 0.5)).collect()
}

/// Embedding of a single frame (not normalized).
pub fn embed_frame(model: &EncoderModel, frame: &TactileFrame) -> Result<Embedding, EncoderError> {
    model.check_frame(frame)?;
    let params = model.to_params();
    let view = params.split();
    let e = view.embed_hidden(&view.hidden(&frame_input(frame)));
    Ok(Embedding(e.into_iter().map(|v| v as f32).collect()))
}

/// Unit-norm mean embedding of a video's salient frames.
pub fn embed_sample(
    model: &EncoderModel,
    video: &TactileVideo,
    cfg: &SaliencyConfig,
) -> Result<Embedding, EncoderError> {
    let mean = model.mean_salient_embedding(video, cfg)?;
    Embedding::normalized_from(&mean).ok_or(EncoderError::DegenerateEmbedding)
}

/// Converts a normalized head output to the reported 0-10 scale.
pub fn report_score(raw: f64) -> f64 {
    (raw * 10.0).clamp(0.0, 10.0)
}

/// Predicted (hardness, roughness) on the 0-10 scale.
pub fn regress_properties(
    model: &EncoderModel,
    video: &TactileVideo,
    cfg: &SaliencyConfig,
) -> Result<(f64, f64), EncoderError> {
    let mean = model.mean_salient_embedding(video, cfg)?;
    let params = model.to_params();
    let [h, r] = params.split().heads(&mean);
    Ok((report_score(h), report_score(r)))
}
