use serde::{Deserialize, Serialize};

use crate::encoder::{embed_sample, regress_properties, EncoderError, EncoderModel};
use crate::saliency::SaliencyConfig;
use crate::tactile::{Dataset, Split};

/// Held-out quality of a trained encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    /// Samples outside the train split.
    pub heldout_samples: usize,
    /// Mean absolute error over both properties, on the 0 to 10 scale.
    pub heldout_mae: f64,
    /// Mean cosine between validation samples of the same part.
    pub same_part_cosine: f64,
    /// Mean cosine between validation samples of different objects.
    pub different_object_cosine: f64,
}

impl TrainingMetrics {
    pub fn cosine_gap(&self) -> f64 {
        self.same_part_cosine - self.different_object_cosine
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn training_metrics(
    dataset: &Dataset,
    model: &EncoderModel,
    saliency: &SaliencyConfig,
) -> Result<TrainingMetrics, EncoderError> {
    let (mut err, mut n) = (0.0, 0);
    for v in dataset
        .videos
        .iter()
        .filter(|v| dataset.split_of(&v.sample_id) != Some(Split::Train))
    {
        let Some(part) = dataset.part_of(v) else { continue };
        let (h, r) = regress_properties(model, v, saliency)?;
        err += (h - part.hardness).abs() + (r - part.roughness).abs();
        n += 1;
    }
    let val = dataset
        .videos_in(Split::Val)
        .map(|v| Ok((v, embed_sample(model, v, saliency)?)))
        .collect::<Result<Vec<_>, EncoderError>>()?;
    let (mut same, mut n_same, mut diff, mut n_diff) = (0.0, 0, 0.0, 0);
    for (i, (a, ea)) in val.iter().enumerate() {
        for (b, eb) in &val[i + 1..] {
            if a.object_id != b.object_id {
                diff += ea.cosine(eb);
                n_diff += 1;
            } else if a.part_id == b.part_id {
                same += ea.cosine(eb);
                n_same += 1;
            }
        }
    }
    Ok(TrainingMetrics {
        heldout_samples: n,
        heldout_mae: mean(err, 2 * n),
        same_part_cosine: mean(same, n_same),
        different_object_cosine: mean(diff, n_diff),
    })
}
