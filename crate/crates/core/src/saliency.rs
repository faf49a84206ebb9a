//! Salient-frame selection: keep the frames that changed most relative to
//! their predecessor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tactile::{TactileFrame, TactileVideo};

pub const DEFAULT_SALIENT_FRAMES: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum SaliencyError {
    #[error("cannot select salient frames from an empty video")]
    EmptyVideo,
    #[error("salient frame count must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMetric {
    #[default]
    MeanAbsDiff,
}

impl FrameMetric {
    pub fn distance(self, a: &TactileFrame, b: &TactileFrame) -> f64 {
        match self {
            FrameMetric::MeanAbsDiff => {
                let sum: f64 = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(&x, &y)| (x as f64 - y as f64).abs())
                    .sum();
                sum / a.len() as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencyConfig {
    pub k: usize,
    pub metric: FrameMetric,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_SALIENT_FRAMES,
            metric: FrameMetric::MeanAbsDiff,
        }
    }
}

impl SaliencyConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }
}

/// Difference score of every frame against its predecessor; entry `i`
/// belongs to frame `i + 1`.
pub fn frame_differences(frames: &[TactileFrame], metric: FrameMetric) -> Vec<f64> {
    frames.windows(2).map(|w| metric.distance(&w[1], &w[0])).collect()
}

/// Indices of the `min(k, N-1)` frames with the largest difference to their
/// predecessor, ties broken toward earlier frames, returned in chronological
/// order. Frame 0 is never selected unless it is the only frame.
pub fn select_salient_frames(frames: &[TactileFrame], cfg: &SaliencyConfig) -> Result<Vec<usize>, SaliencyError> {
    if cfg.k == 0 {
        return Err(SaliencyError::ZeroK);
    }
    match frames.len() {
        0 => Err(SaliencyError::EmptyVideo),
        1 => Ok(vec![0]),
        _ => {
            let diffs = frame_differences(frames, cfg.metric);
            let mut order: Vec<usize> = (1..frames.len()).collect();
            // stable sort keeps ascending index among equal scores
            order.sort_by(|&a, &b| diffs[b - 1].total_cmp(&diffs[a - 1]));
            order.truncate(cfg.k);
            order.sort_unstable();
            Ok(order)
        }
    }
}

pub fn select_salient(video: &TactileVideo, cfg: &SaliencyConfig) -> Result<Vec<usize>, SaliencyError> {
    select_salient_frames(video.frames(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: f32) -> TactileFrame {
        TactileFrame::new(2, 2, vec![v; 4]).unwrap()
    }

    #[test]
    fn identical_frames_pick_earliest() {
        let frames = vec![flat(0.3); 24];
        let got = select_salient_frames(&frames, &SaliencyConfig::default()).unwrap();
        assert_eq!(got, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn single_frame_fallback_and_errors() {
        assert_eq!(
            select_salient_frames(&[flat(0.1)], &SaliencyConfig::default()).unwrap(),
            vec![0]
        );
        assert_eq!(
            select_salient_frames(&[], &SaliencyConfig::default()),
            Err(SaliencyError::EmptyVideo)
        );
        assert_eq!(
            select_salient_frames(&[flat(0.1)], &SaliencyConfig::with_k(0)),
            Err(SaliencyError::ZeroK)
        );
    }

    #[test]
    fn short_video_returns_all_but_first() {
        let frames = vec![flat(0.0), flat(0.5), flat(0.6)];
        assert_eq!(
            select_salient_frames(&frames, &SaliencyConfig::default()).unwrap(),
            vec![1, 2]
        );
    }

    #[test]
    fn picks_largest_jumps_in_chronological_order() {
        let levels = [0.0, 0.1, 0.5, 0.55, 1.0, 0.95];
        let frames: Vec<_> = levels.iter().map(|&v| flat(v)).collect();
        // diffs for frames 1..=5: 0.1, 0.4, 0.05, 0.45, 0.05
        let got = select_salient_frames(&frames, &SaliencyConfig::with_k(3)).unwrap();
        assert_eq!(got, vec![1, 2, 4]);
    }
}
