//! Combined regression + contrastive objective and its analytic gradient.
//!
//! For a batch of samples with mean embeddings `m_i`:
//!
//! * regression: mean squared error of the two heads against
//!   `(h/10, r/10)`, averaged over all `2N` outputs;
//! * contrastive: for every (anchor, positive) pair, the temperature-scaled
//!   cross-entropy of the positive cosine similarity against the anchor's
//!   similarities to every sample of a different (object, part):
//!   `-log(exp(s_ap/t) / (exp(s_ap/t) + sum_n exp(s_an/t)))`, averaged over
//!   anchors;
//! * total = regression + weight * contrastive.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EncoderDims, EncoderError, ParamView, Params};
use crate::tactile::PadType;

/// Smoothing inside the cosine norm, `|u| = sqrt(u.u + eps)`, so zero
/// embeddings stay differentiable.
pub const COSINE_EPS: f64 = 1e-12;

/// (object_id, part_id); samples sharing it are positives for each other.
pub type ClassKey = (String, String);

#[derive(Debug, Clone)]
pub struct BatchSample {
    pub sample_id: String,
    pub class: ClassKey,
    pub pad: PadType,
    /// Normalized (hardness, roughness) in `[0, 1]`.
    pub target: [f64; 2],
    /// Flattened salient frames.
    pub frames: Arc<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    samples: Vec<BatchSample>,
    anchors: Vec<(usize, usize)>,
}

impl Batch {
    /// `anchors` holds (anchor, positive) index pairs into `samples`.
    pub fn new(samples: Vec<BatchSample>, anchors: Vec<(usize, usize)>) -> Result<Self, EncoderError> {
        let Some(first) = samples.first() else {
            return Err(EncoderError::InvalidBatch("batch has no samples".into()));
        };
        if samples.iter().any(|s| s.pad != first.pad) {
            return Err(EncoderError::MixedPads);
        }
        if let Some(s) = samples.iter().find(|s| s.frames.is_empty()) {
            return Err(EncoderError::InvalidBatch(format!(
                "sample `{}` has no frames",
                s.sample_id
            )));
        }
        for &(a, p) in &anchors {
            if a >= samples.len() || p >= samples.len() || a == p {
                return Err(EncoderError::InvalidBatch(format!("bad anchor pair ({a}, {p})")));
            }
            if samples[a].class != samples[p].class {
                return Err(EncoderError::InvalidBatch(format!(
                    "positive `{}` is not the same part as anchor `{}`",
                    samples[p].sample_id, samples[a].sample_id
                )));
            }
            if !samples.iter().any(|s| s.class != samples[a].class) {
                return Err(EncoderError::InvalidBatch(format!(
                    "anchor `{}` has no negatives",
                    samples[a].sample_id
                )));
            }
        }
        Ok(Self { samples, anchors })
    }

    pub fn samples(&self) -> &[BatchSample] {
        &self.samples
    }

    pub fn anchors(&self) -> &[(usize, usize)] {
        &self.anchors
    }

    pub fn pad(&self) -> PadType {
        self.samples[0].pad
    }

    /// Indices of samples from a different (object, part) than `anchor`.
    pub fn negatives(&self, anchor: usize) -> impl Iterator<Item = usize> + '_ {
        let class = &self.samples[anchor].class;
        (0..self.samples.len()).filter(move |&i| &self.samples[i].class != class)
    }

    fn check_dims(&self, dims: EncoderDims) -> Result<(), EncoderError> {
        for s in &self.samples {
            if s.frames.iter().any(|f| f.len() != dims.input()) {
                return Err(EncoderError::InvalidBatch(format!(
                    "sample `{}` frame size does not match model input {}",
                    s.sample_id,
                    dims.input()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub contrastive_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.07,
            contrastive_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub regression: f64,
    pub contrastive: f64,
}

struct SampleForward {
    hidden: Vec<Vec<f64>>,
    mean: Vec<f64>,
    preds: [f64; 2],
}

fn forward(view: &ParamView<'_>, batch: &Batch) -> Vec<SampleForward> {
    batch
        .samples
        .iter()
        .map(|s| {
            let hidden: Vec<Vec<f64>> = s.frames.iter().map(|x| view.hidden(x)).collect();
            let mut mean = vec![0.0; view.dims.embed];
            for h in &hidden {
                for (m, e) in mean.iter_mut().zip(view.embed_hidden(h)) {
                    *m += e;
                }
            }
            let f = hidden.len() as f64;
            mean.iter_mut().for_each(|m| *m /= f);
            let preds = view.heads(&mean);
            SampleForward { hidden, mean, preds }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn smooth_norm(a: &[f64]) -> f64 {
    (dot(a, a) + COSINE_EPS).sqrt()
}

/// Returns the loss parts and, optionally, dL/d(mean embedding) per sample
/// plus dL/d(head outputs) per sample.
fn objective(
    batch: &Batch,
    fwd: &[SampleForward],
    cfg: &LossConfig,
    want_grad: bool,
) -> (LossParts, Vec<Vec<f64>>, Vec<[f64; 2]>) {
    let n = batch.samples.len();
    let dim = fwd[0].mean.len();
    let mut d_mean = if want_grad { vec![vec![0.0; dim]; n] } else { Vec::new() };
    let mut d_pred = vec![[0.0; 2]; n];

    let mut sq = 0.0;
    for (i, (s, f)) in batch.samples.iter().zip(fwd).enumerate() {
        for k in 0..2 {
            let r = f.preds[k] - s.target[k];
            sq += r * r;
            d_pred[i][k] = r / n as f64;
        }
    }
    let regression = sq / (2 * n) as f64;

    let norms: Vec<f64> = fwd.iter().map(|f| smooth_norm(&f.mean)).collect();
    let cos = |a: usize, b: usize| dot(&fwd[a].mean, &fwd[b].mean) / (norms[a] * norms[b]);
    let tau = cfg.temperature;
    let n_anchors = batch.anchors.len();
    let mut contrastive = 0.0;
    for &(a, p) in &batch.anchors {
        let mut others: Vec<usize> = vec![p];
        others.extend(batch.negatives(a));
        let logits: Vec<f64> = others.iter().map(|&j| cos(a, j) / tau).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        contrastive += max + sum_exp.ln() - logits[0];
        if want_grad {
            let scale = cfg.contrastive_weight / n_anchors as f64;
            for (idx, &j) in others.iter().enumerate() {
                let softmax = (logits[idx] - max).exp() / sum_exp;
                let d_sim = scale * (softmax - if idx == 0 { 1.0 } else { 0.0 }) / tau;
                if d_sim == 0.0 {
                    continue;
                }
                // d cos(u, v)/du = v/(|u||v|) - cos * u/|u|^2
                let s = cos(a, j);
                let (na, nj) = (norms[a], norms[j]);
                for k in 0..dim {
                    let (u, v) = (fwd[a].mean[k], fwd[j].mean[k]);
                    d_mean[a][k] += d_sim * (v / (na * nj) - s * u / (na * na));
                    d_mean[j][k] += d_sim * (u / (na * nj) - s * v / (nj * nj));
                }
            }
        }
    }
    if n_anchors > 0 {
        contrastive /= n_anchors as f64;
    }
    let parts = LossParts {
        total: regression + cfg.contrastive_weight * contrastive,
        regression,
        contrastive,
    };
    (parts, d_mean, d_pred)
}

/// Loss of `params` on `batch`.
pub fn loss(params: &Params, batch: &Batch, cfg: &LossConfig) -> Result<LossParts, EncoderError> {
    batch.check_dims(params.dims)?;
    let view = params.split();
    let fwd = forward(&view, batch);
    let (parts, _, _) = objective(batch, &fwd, cfg, false);
    if !(parts.total.is_finite() && parts.regression.is_finite() && parts.contrastive.is_finite()) {
        return Err(EncoderError::NonFiniteLoss);
    }
    Ok(parts)
}

/// Loss and its analytic gradient with respect to every parameter.
pub fn gradients(params: &Params, batch: &Batch, cfg: &LossConfig) -> Result<(LossParts, Params), EncoderError> {
    batch.check_dims(params.dims)?;
    let dims = params.dims;
    let view = params.split();
    let fwd = forward(&view, batch);
    let (parts, mut d_mean, d_pred) = objective(batch, &fwd, cfg, true);
    if !parts.total.is_finite() {
        return Err(EncoderError::NonFiniteLoss);
    }

    let mut grad = Params::zeros(dims);
    let g = grad.split_mut();
    let (n_in, n_hid, n_emb) = (dims.input(), dims.hidden, dims.embed);

    for (i, (s, f)) in batch.samples.iter().zip(&fwd).enumerate() {
        // heads
        for k in 0..2 {
            g.head_b[k] += d_pred[i][k];
            for e in 0..n_emb {
                g.head_w[k * n_emb + e] += d_pred[i][k] * f.mean[e];
                d_mean[i][e] += d_pred[i][k] * view.head_w[k * n_emb + e];
            }
        }
        // mean over frames: each frame embedding receives d_mean / F
        let inv_f = 1.0 / f.hidden.len() as f64;
        let d_emb: Vec<f64> = d_mean[i].iter().map(|v| v * inv_f).collect();
        let mut hidden_sum = vec![0.0; n_hid];
        for h in &f.hidden {
            for (acc, v) in hidden_sum.iter_mut().zip(h) {
                *acc += v;
            }
        }
        for e in 0..n_emb {
            g.b2[e] += d_emb[e] * f.hidden.len() as f64;
            for j in 0..n_hid {
                g.w2[e * n_hid + j] += d_emb[e] * hidden_sum[j];
            }
        }
        let d_hidden: Vec<f64> = (0..n_hid)
            .map(|j| (0..n_emb).map(|e| view.w2[e * n_hid + j] * d_emb[e]).sum())
            .collect();
        for (x, h) in s.frames.iter().zip(&f.hidden) {
            for j in 0..n_hid {
                let dz = d_hidden[j] * (1.0 - h[j] * h[j]);
                if dz == 0.0 {
                    continue;
                }
                g.b1[j] += dz;
                let row = &mut g.w1[j * n_in..(j + 1) * n_in];
                for (w, xv) in row.iter_mut().zip(x) {
                    *w += dz * xv;
                }
            }
        }
    }
    if !grad.is_finite() {
        return Err(EncoderError::NonFiniteLoss);
    }
    Ok((parts, grad))
}
