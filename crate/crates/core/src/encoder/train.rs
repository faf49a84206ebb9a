//! Mini-batch gradient descent with validation-based model selection.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{gradients, loss, Batch, BatchSample, ClassKey, LossConfig, LossParts};
use super::{
    frame_input, EncoderDims, EncoderError, EncoderModel, ModelMeta, Params, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM,
};
use crate::saliency::{select_salient, SaliencyConfig};
use crate::tactile::{Dataset, PadType, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub anchors_per_batch: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub contrastive_weight: f64,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub saliency: SaliencyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            anchors_per_batch: 8,
            learning_rate: 0.05,
            temperature: 0.07,
            contrastive_weight: 1.0,
            seed: 7,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
            saliency: SaliencyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            temperature: self.temperature,
            contrastive_weight: self.contrastive_weight,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::InvalidConfig(m.to_owned()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.contrastive_weight >= 0.0 && self.contrastive_weight.is_finite()) {
            return bad("contrastive weight must be non-negative");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be non-negative");
        }
        if self.anchors_per_batch == 0 || self.hidden_dim == 0 || self.embed_dim == 0 || self.saliency.k == 0 {
            return bad("batch size, layer widths and salient frame count must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch loss seen while stepping through the epoch.
    pub running: LossParts,
    /// Loss after the epoch on fixed training evaluation batches.
    pub train: LossParts,
    pub val: LossParts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn best(&self) -> &EpochLog {
        &self.epochs[self.best_epoch]
    }
}

/// Salient frames and normalized targets for every video of `split`.
pub fn prepare_samples(
    dataset: &Dataset,
    split: Split,
    saliency: &SaliencyConfig,
) -> Result<Vec<BatchSample>, EncoderError> {
    dataset
        .videos_in(split)
        .map(|v| {
            let part = dataset
                .part_of(v)
                .ok_or_else(|| EncoderError::InvalidBatch(format!("`{}` has no part record", v.sample_id)))?;
            let idx = select_salient(v, saliency)?;
            let frames = idx.iter().map(|&i| frame_input(&v.frames()[i])).collect();
            Ok(BatchSample {
                sample_id: v.sample_id.clone(),
                class: (v.object_id.clone(), v.part_id.clone()),
                pad: v.pad_type,
                target: [part.hardness / 10.0, part.roughness / 10.0],
                frames: Arc::new(frames),
            })
        })
        .collect()
}

/// Builds pad-pure batches: anchors are chunked from a shuffled pad group,
/// each gets a random positive from its own part, and a random negative is
/// added when the chunk has none.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    samples: Vec<BatchSample>,
    groups: BTreeMap<PadType, Vec<usize>>,
    classes: BTreeMap<ClassKey, Vec<usize>>,
    anchors_per_batch: usize,
}

impl BatchSampler {
    pub fn new(samples: Vec<BatchSample>, anchors_per_batch: usize) -> Self {
        let mut groups: BTreeMap<PadType, Vec<usize>> = BTreeMap::new();
        let mut classes: BTreeMap<ClassKey, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            groups.entry(s.pad).or_default().push(i);
            classes.entry(s.class.clone()).or_default().push(i);
        }
        Self {
            samples,
            groups,
            classes,
            anchors_per_batch: anchors_per_batch.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn same_pad_class_members(&self, i: usize) -> Vec<usize> {
        let s = &self.samples[i];
        self.classes[&s.class]
            .iter()
            .copied()
            .filter(|&j| j != i && self.samples[j].pad == s.pad)
            .collect()
    }

    pub fn epoch(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Batch>, EncoderError> {
        let mut batches = Vec::new();
        for members in self.groups.values() {
            let mut order = members.clone();
            order.shuffle(rng);
            for chunk in order.chunks(self.anchors_per_batch) {
                let mut picked: Vec<usize> = chunk.to_vec();
                let mut pairs = Vec::new();
                for &a in chunk {
                    let positives = self.same_pad_class_members(a);
                    if positives.is_empty() {
                        continue;
                    }
                    let p = positives[rng.random_range(0..positives.len())];
                    if !picked.contains(&p) {
                        picked.push(p);
                    }
                    pairs.push((a, p));
                }
                let lacks_negative =
                    |picked: &[usize], a: usize| picked.iter().all(|&j| self.samples[j].class == self.samples[a].class);
                let mut kept = Vec::new();
                for (a, p) in pairs {
                    if lacks_negative(&picked, a) {
                        let outsiders: Vec<usize> = members
                            .iter()
                            .copied()
                            .filter(|&j| self.samples[j].class != self.samples[a].class)
                            .collect();
                        if outsiders.is_empty() {
                            continue;
                        }
                        picked.push(outsiders[rng.random_range(0..outsiders.len())]);
                    }
                    kept.push((a, p));
                }
                let local = |g: usize| picked.iter().position(|&x| x == g).unwrap();
                let anchors = kept.iter().map(|&(a, p)| (local(a), local(p))).collect();
                let samples = picked.iter().map(|&g| self.samples[g].clone()).collect();
                batches.push(Batch::new(samples, anchors)?);
            }
        }
        batches.shuffle(rng);
        Ok(batches)
    }
}

fn mean_parts(parts: &[LossParts]) -> LossParts {
    let n = parts.len().max(1) as f64;
    LossParts {
        total: parts.iter().map(|p| p.total).sum::<f64>() / n,
        regression: parts.iter().map(|p| p.regression).sum::<f64>() / n,
        contrastive: parts.iter().map(|p| p.contrastive).sum::<f64>() / n,
    }
}

fn evaluate(params: &Params, batches: &[Batch], cfg: &LossConfig) -> Result<LossParts, EncoderError> {
    let parts = batches
        .iter()
        .map(|b| loss(params, b, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean_parts(&parts))
}

const TRAIN_EVAL_STREAM: u64 = 2;
const VAL_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains for `cfg.epochs` epochs and returns the snapshot with the lowest
/// validation loss (earliest epoch on ties).
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(EncoderModel, TrainingLog), EncoderError> {
    cfg.validate()?;
    let train_samples = prepare_samples(dataset, Split::Train, &cfg.saliency)?;
    let val_samples = prepare_samples(dataset, Split::Val, &cfg.saliency)?;
    if train_samples.is_empty() {
        return Err(EncoderError::EmptySplit("train"));
    }
    if val_samples.is_empty() {
        return Err(EncoderError::EmptySplit("val"));
    }
    let (h, w) = dataset
        .videos_in(Split::Train)
        .next()
        .and_then(|v| v.frame_dims())
        .expect("train split is non-empty");
    let dims = EncoderDims::new(h, w, cfg.hidden_dim, cfg.embed_dim);
    let loss_cfg = cfg.loss_config();

    let sampler = BatchSampler::new(train_samples, cfg.anchors_per_batch);
    let train_eval = sampler.epoch(&mut stream(cfg.seed, TRAIN_EVAL_STREAM))?;
    let val_batches = BatchSampler::new(val_samples, cfg.anchors_per_batch).epoch(&mut stream(cfg.seed, VAL_STREAM))?;

    let meta = |best_epoch| ModelMeta {
        init_seed: cfg.seed,
        train_config: Some(cfg.clone()),
        best_epoch,
    };
    let mut params = EncoderModel::init(dims, cfg.seed).to_params();
    let mut rng = stream(cfg.seed, 1);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, EncoderModel)> = None;

    for epoch in 0..cfg.epochs {
        let diverged = |_| EncoderError::Diverged { epoch };
        let mut running = Vec::new();
        for batch in sampler.epoch(&mut rng)? {
            let (parts, grad) = gradients(&params, &batch, &loss_cfg).map_err(diverged)?;
            params.step(&grad, cfg.learning_rate);
            running.push(parts);
        }
        if !params.is_finite() {
            return Err(EncoderError::Diverged { epoch });
        }
        let snapshot = EncoderModel::from_params(&params, meta(Some(epoch)));
        let rounded = snapshot.to_params();
        let train = evaluate(&rounded, &train_eval, &loss_cfg).map_err(diverged)?;
        let val = evaluate(&rounded, &val_batches, &loss_cfg).map_err(diverged)?;
        log.push(EpochLog {
            epoch,
            running: mean_parts(&running),
            train,
            val,
        });
        if best.as_ref().is_none_or(|(v, _, _)| val.total < *v) {
            best = Some((val.total, epoch, snapshot));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok((
        model,
        TrainingLog {
            epochs: log,
            best_epoch,
        },
    ))
}
