//! Central finite-difference verification of the analytic gradient.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{gradients, loss, Batch, BatchSample, LossConfig};
use super::{EncoderDims, EncoderError, Params};
use crate::tactile::PadType;

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_REL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    /// `|analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)`
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.rel_error < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }
}

/// Numerical gradient of the total loss, one coordinate at a time.
pub fn numeric_gradient(params: &Params, batch: &Batch, cfg: &LossConfig, step: f64) -> Result<Params, EncoderError> {
    let mut probe = params.clone();
    let mut out = Params::zeros(params.dims);
    for i in 0..params.data.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + step;
        let up = loss(&probe, batch, cfg)?.total;
        probe.data[i] = orig - step;
        let down = loss(&probe, batch, cfg)?.total;
        probe.data[i] = orig;
        out.data[i] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// Compares analytic and central-difference gradients per parameter group.
pub fn check_gradients(
    params: &Params,
    batch: &Batch,
    cfg: &LossConfig,
    step: f64,
) -> Result<GradCheckReport, EncoderError> {
    let (_, analytic) = gradients(params, batch, cfg)?;
    let numeric = numeric_gradient(params, batch, cfg, step)?;
    let groups = analytic
        .groups()
        .into_iter()
        .zip(numeric.groups())
        .map(|((name, a), (_, n))| {
            let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let an = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
            let denom = an.max(nn);
            let rel_error = if denom == 0.0 { diff } else { diff / denom };
            GroupCheck {
                name: name.to_owned(),
                rel_error,
                max_abs_error: a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
                analytic_norm: an,
            }
        })
        .collect();
    Ok(GradCheckReport {
        groups,
        tolerance: GRAD_REL_TOLERANCE,
    })
}

/// A tiny random model and batch for gradient checks: 3x3 frames, 5 hidden
/// units, 4-dimensional embeddings, three parts with two samples each.
pub fn random_problem(seed: u64) -> (Params, Batch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = EncoderDims::new(3, 3, 5, 4);
    let data = (0..dims.param_count()).map(|_| rng.random_range(-0.8..0.8)).collect();
    let params = Params { dims, data };
    let mut samples = Vec::new();
    for c in 0..3 {
        for s in 0..2 {
            let n_frames = rng.random_range(1..=3);
            let frames = (0..n_frames)
                .map(|_| (0..dims.input()).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            samples.push(BatchSample {
                sample_id: format!("c{c}s{s}"),
                class: (format!("o{c}"), "p1".into()),
                pad: PadType::Plain,
                target: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                frames: Arc::new(frames),
            });
        }
    }
    let batch = Batch::new(samples, vec![(0, 1), (2, 3), (5, 4)]).expect("valid random batch");
    (params, batch)
}
