use serde::{Deserialize, Serialize};

/// Unit-norm tolerance used wherever an embedding must be normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Fixed-dimension encoder output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(&a, &b)| a as f64 * b as f64).sum()
    }

    /// Cosine similarity clamped to `[-1, 1]`; zero vectors give 0.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return 0.0;
        }
        (self.dot(other) / denom).clamp(-1.0, 1.0)
    }

    /// L2-normalizes an f64 vector into an embedding; `None` for zero or
    /// non-finite input.
    pub fn normalized_from(values: &[f64]) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        Some(Self(values.iter().map(|v| (v / norm) as f32).collect()))
    }
}
