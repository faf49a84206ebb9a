//! Deterministic synthetic tactile data.
//!
//! Each part carries a hardness `h` and roughness `r` drawn uniformly from
//! `[0, 10]`. A video is a simulated press: contact depth eases from 0 to 1,
//! and every frame is
//!
//! ```text
//! I(p) = BASE + BUMP_GAIN * depth * bump(p; sigma(h))
//!      + TEXTURE_GAIN * (r / 10) * depth * texture(p)
//!      + sensor noise  [+ dark marker lattice on dotted pads]
//! ```
//!
//! clamped to `[0, 1]`. `sigma(h)` shrinks linearly with hardness, so soft
//! parts spread the contact over a wider area. Each part also has its own
//! contact geometry: the bump centre is offset and stretched into an ellipse
//! of the same area. `texture` is one seeded high-frequency field per
//! dataset; roughness scales its amplitude.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjectives::adjectives_for;
use crate::tactile::{Dataset, ObjectRecord, PadType, PartRecord, Split, TactileFrame, TactileVideo};

const BASE: f64 = 0.35;
const BUMP_GAIN: f64 = 0.4;
const TEXTURE_GAIN: f64 = 0.25;
const NOISE_AMPLITUDE: f64 = 0.01;
const MARKER_DEPTH: f64 = 0.15;
const MARKER_PITCH: u32 = 4;

const TRAIN_LABELS: [&str; 24] = [
    "a new baseball's seams",
    "a plush ball",
    "a tennis ball",
    "an unpeeled, ripe apple",
    "a partially ripe kiwi",
    "an unpeeled, ripe orange",
    "the back of a TV remote",
    "a foam mattress",
    "a ball of cotton wool",
    "a river rock",
    "an ice cube",
    "a pair of jeans",
    "toothbrush bristles",
    "a kitchen sponge",
    "a wooden block",
    "a rubber eraser",
    "a ceramic mug",
    "a wool sweater",
    "a leather wallet",
    "a sheet of sandpaper",
    "a silicone spatula",
    "a pine cone",
    "a memory foam pillow",
    "a glass bottle",
];

const VAL_LABELS: [&str; 6] = [
    "a yoga mat",
    "a cork coaster",
    "a stress ball",
    "a steel spoon",
    "a loofah",
    "a felt pad",
];

const UNSEEN_LABELS: [&str; 6] = [
    "hairbrush bristles",
    "a hairbrush handle",
    "a microfiber cloth",
    "a bath towel",
    "a plastic comb",
    "a bar of soap",
];

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("`{0}` must be at least 1")]
    ZeroCount(&'static str),
    #[error("grid_size must be at least 4, got {0}")]
    GridTooSmall(u32),
    #[error("pad_mix must be a finite fraction in [0, 1], got {0}")]
    BadPadMix(f64),
    #[error("{val} val + {test} test objects exceed {total} objects")]
    TooManyHeldOutObjects { val: u32, test: u32, total: u32 },
    #[error("holdout_per_part ({holdout}) must be smaller than samples_per_part ({samples})")]
    HoldoutTooLarge { holdout: u32, samples: u32 },
}

/// Knobs of the synthetic generator. Objects are laid out as
/// `[train | val | test]`; the last `holdout_per_part` videos of every train
/// part go to the test split as held-out probes of seen objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub num_objects: u32,
    /// Upper bound; each object gets between 1 and this many parts.
    pub parts_per_object: u32,
    pub samples_per_part: u32,
    pub frames_per_video: u32,
    pub grid_size: u32,
    /// Probability that an object is recorded with the dotted pad.
    pub pad_mix: f64,
    pub seed: u64,
    pub val_objects: u32,
    pub test_objects: u32,
    pub holdout_per_part: u32,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            num_objects: 36,
            parts_per_object: 2,
            samples_per_part: 12,
            frames_per_video: 24,
            grid_size: 16,
            pad_mix: 0.4,
            seed: 2025,
            val_objects: 6,
            test_objects: 6,
            holdout_per_part: 5,
        }
    }
}

impl GeneratorSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        for (name, v) in [
            ("num_objects", self.num_objects),
            ("parts_per_object", self.parts_per_object),
            ("samples_per_part", self.samples_per_part),
            ("frames_per_video", self.frames_per_video),
        ] {
            if v == 0 {
                return Err(GenerateError::ZeroCount(name));
            }
        }
        if self.grid_size < 4 {
            return Err(GenerateError::GridTooSmall(self.grid_size));
        }
        if !self.pad_mix.is_finite() || !(0.0..=1.0).contains(&self.pad_mix) {
            return Err(GenerateError::BadPadMix(self.pad_mix));
        }
        if self.val_objects + self.test_objects > self.num_objects {
            return Err(GenerateError::TooManyHeldOutObjects {
                val: self.val_objects,
                test: self.test_objects,
                total: self.num_objects,
            });
        }
        if self.holdout_per_part > 0 && self.holdout_per_part >= self.samples_per_part {
            return Err(GenerateError::HoldoutTooLarge {
                holdout: self.holdout_per_part,
                samples: self.samples_per_part,
            });
        }
        Ok(())
    }

    pub fn train_objects(&self) -> u32 {
        self.num_objects - self.val_objects - self.test_objects
    }
}

/// Contact spread in pixels; strictly decreasing in hardness.
pub fn contact_sigma(hardness: f64, grid_size: u32) -> f64 {
    grid_size as f64 * (0.32 - 0.022 * hardness)
}

const MAX_OFFSET: f64 = 0.08;
const MAX_LOG_ASPECT: f64 = 0.25;

/// Where and how a part meets the sensor. Offsets are fractions of the grid
/// size; `aspect` stretches the contact along y and shrinks it along x by the
/// same factor, leaving the contact area unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactShape {
    pub offset_y: f64,
    pub offset_x: f64,
    pub aspect: f64,
}

impl Default for ContactShape {
    fn default() -> Self {
        Self {
            offset_y: 0.0,
            offset_x: 0.0,
            aspect: 1.0,
        }
    }
}

impl ContactShape {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            offset_y: rng.random_range(-MAX_OFFSET..=MAX_OFFSET),
            offset_x: rng.random_range(-MAX_OFFSET..=MAX_OFFSET),
            aspect: rng.random_range(-MAX_LOG_ASPECT..=MAX_LOG_ASPECT).exp(),
        }
    }
}

/// Renders presses for arbitrary (hardness, roughness) against one dataset's
/// texture field.
#[derive(Debug, Clone)]
pub struct PressRenderer {
    seed: u64,
    grid: u32,
    frames: u32,
    texture: Vec<f64>,
}

impl PressRenderer {
    pub fn new(spec: &GeneratorSpec) -> Self {
        Self::with_object_rng(spec).0
    }

    /// Also returns stream 0 positioned just past the texture draws; the
    /// generator continues on it for object-level draws.
    fn with_object_rng(spec: &GeneratorSpec) -> (Self, ChaCha8Rng) {
        let mut rng = stream_rng(spec.seed, 0);
        let n = (spec.grid_size * spec.grid_size) as usize;
        let texture = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let renderer = Self {
            seed: spec.seed,
            grid: spec.grid_size,
            frames: spec.frames_per_video,
            texture,
        };
        (renderer, rng)
    }

    /// Contact depth per frame for a press starting at `onset`.
    fn depth_profile(&self, onset: u32) -> Vec<f64> {
        let ramp = (self.frames / 2).max(1) as f64;
        (0..self.frames)
            .map(|t| {
                let u = ((t as f64 - onset as f64) / ramp).clamp(0.0, 1.0);
                u * u * (3.0 - 2.0 * u)
            })
            .collect()
    }

    /// Renders one centred, circular press. `stream` selects the per-video
    /// noise stream; equal streams give equal onset and noise regardless of
    /// the scores.
    pub fn render(&self, hardness: f64, roughness: f64, pad: PadType, stream: u64) -> Vec<TactileFrame> {
        self.render_shaped(hardness, roughness, pad, ContactShape::default(), stream)
    }

    pub fn render_shaped(
        &self,
        hardness: f64,
        roughness: f64,
        pad: PadType,
        shape: ContactShape,
        stream: u64,
    ) -> Vec<TactileFrame> {
        let mut rng = stream_rng(self.seed, stream);
        let max_onset = (self.frames / 6).max(1);
        let onset = rng.random_range(1..=max_onset);
        let n = self.grid;
        let cy = (n as f64 - 1.0) / 2.0 + shape.offset_y * n as f64;
        let cx = (n as f64 - 1.0) / 2.0 + shape.offset_x * n as f64;
        let sigma = contact_sigma(hardness, n);
        let (sy, sx) = (sigma * shape.aspect.sqrt(), sigma / shape.aspect.sqrt());
        let bump: Vec<f64> = (0..n)
            .flat_map(|y| (0..n).map(move |x| (y, x)))
            .map(|(y, x)| {
                let e = ((y as f64 - cy) / sy).powi(2) + ((x as f64 - cx) / sx).powi(2);
                (-e / 2.0).exp()
            })
            .collect();
        let rough = roughness / 10.0;
        self.depth_profile(onset)
            .into_iter()
            .map(|depth| {
                let values = bump
                    .iter()
                    .zip(&self.texture)
                    .enumerate()
                    .map(|(i, (b, t))| {
                        let noise = rng.random_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE);
                        let mut v = BASE + BUMP_GAIN * depth * b + TEXTURE_GAIN * rough * depth * t + noise;
                        let (y, x) = (i as u32 / n, i as u32 % n);
                        if pad == PadType::Dotted && y % MARKER_PITCH == 1 && x % MARKER_PITCH == 1 {
                            v -= MARKER_DEPTH;
                        }
                        v.clamp(0.0, 1.0) as f32
                    })
                    .collect();
                TactileFrame::new(n, n, values).expect("rendered frame is in range")
            })
            .collect()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn video_stream(object: u32, part: u32, video: u32) -> u64 {
    1 + ((object as u64) << 32 | (part as u64) << 16 | video as u64)
}

fn label_for(role: Split, index: usize) -> String {
    let table: &[&str] = match role {
        Split::Train => &TRAIN_LABELS,
        Split::Val => &VAL_LABELS,
        Split::Test => &UNSEEN_LABELS,
    };
    let base = table[index % table.len()];
    match index / table.len() {
        0 => base.to_owned(),
        k => format!("{base} ({})", k + 1),
    }
}

pub fn generate_dataset(spec: &GeneratorSpec) -> Result<Dataset, GenerateError> {
    spec.validate()?;
    let (renderer, mut rng) = PressRenderer::with_object_rng(spec);

    let n_train = spec.train_objects();
    let mut objects = Vec::new();
    let mut videos = Vec::new();
    let mut split = BTreeMap::new();
    for o in 0..spec.num_objects {
        let (role, role_index) = if o < n_train {
            (Split::Train, o)
        } else if o < n_train + spec.val_objects {
            (Split::Val, o - n_train)
        } else {
            (Split::Test, o - n_train - spec.val_objects)
        };
        let pad = if rng.random_bool(spec.pad_mix) {
            PadType::Dotted
        } else {
            PadType::Plain
        };
        let n_parts = rng.random_range(1..=spec.parts_per_object);
        let object_id = format!("o{o:03}");
        let mut parts = Vec::new();
        for p in 0..n_parts {
            let hardness: f64 = rng.random_range(0.0..=10.0);
            let roughness: f64 = rng.random_range(0.0..=10.0);
            let shape = ContactShape::random(&mut rng);
            let part_id = format!("p{}", p + 1);
            for s in 0..spec.samples_per_part {
                let sample_id = format!("{object_id}-{part_id}-s{s:03}");
                let frames = renderer.render_shaped(hardness, roughness, pad, shape, video_stream(o, p, s));
                let assigned = match role {
                    Split::Train if s >= spec.samples_per_part - spec.holdout_per_part => Split::Test,
                    r => r,
                };
                split.insert(sample_id.clone(), assigned);
                videos.push(TactileVideo::new_unchecked(
                    sample_id, &object_id, &part_id, pad, frames,
                ));
            }
            parts.push(PartRecord {
                part_id,
                hardness,
                roughness,
                adjectives: adjectives_for(hardness, roughness),
            });
        }
        objects.push(ObjectRecord {
            object_id,
            label: label_for(role, role_index as usize),
            parts,
        });
    }
    Ok(Dataset {
        objects,
        videos,
        split,
        seed: spec.seed,
        generator: Some(spec.clone()),
    })
}

/// Mean intensity over all frames; grows with the contact area.
pub fn deformation_spread(frames: &[TactileFrame]) -> f64 {
    let total: f64 = frames
        .iter()
        .map(|f| f.values().iter().map(|&v| v as f64).sum::<f64>() / f.len() as f64)
        .sum();
    total / frames.len() as f64
}

/// Mean squared residual against the 3x3 neighbourhood mean over interior
/// pixels, averaged over frames; grows with surface texture.
pub fn texture_energy(frames: &[TactileFrame]) -> f64 {
    let mut total = 0.0;
    for f in frames {
        let (h, w) = f.dims();
        let mut acc = 0.0;
        let mut count = 0usize;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut s = 0.0;
                for dy in 0..3 {
                    for dx in 0..3 {
                        s += f.get(y + dy - 1, x + dx - 1) as f64;
                    }
                }
                let r = f.get(y, x) as f64 - s / 9.0;
                acc += r * r;
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / frames.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorSpec {
        GeneratorSpec {
            num_objects: 5,
            parts_per_object: 2,
            samples_per_part: 3,
            frames_per_video: 6,
            grid_size: 8,
            pad_mix: 0.5,
            seed: 11,
            val_objects: 1,
            test_objects: 1,
            holdout_per_part: 1,
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small();
        s.grid_size = 3;
        assert_eq!(generate_dataset(&s), Err(GenerateError::GridTooSmall(3)));
        let mut s = small();
        s.samples_per_part = 0;
        assert_eq!(generate_dataset(&s), Err(GenerateError::ZeroCount("samples_per_part")));
        let mut s = small();
        s.pad_mix = f64::NAN;
        assert!(matches!(generate_dataset(&s), Err(GenerateError::BadPadMix(_))));
        let mut s = small();
        s.val_objects = 5;
        assert!(generate_dataset(&s).is_err());
        let mut s = small();
        s.holdout_per_part = 3;
        assert!(generate_dataset(&s).is_err());
    }

    #[test]
    fn generated_dataset_is_valid_and_deterministic() {
        let a = generate_dataset(&small()).unwrap();
        a.validate().unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 12;
        assert_ne!(a, generate_dataset(&other).unwrap());
    }

    #[test]
    fn five_samples_per_object_lower_bound() {
        let spec = GeneratorSpec {
            num_objects: 100,
            parts_per_object: 1,
            samples_per_part: 5,
            frames_per_video: 2,
            grid_size: 4,
            pad_mix: 0.0,
            seed: 1,
            val_objects: 0,
            test_objects: 0,
            holdout_per_part: 0,
        };
        let d = generate_dataset(&spec).unwrap();
        assert_eq!(d.objects.len(), 100);
        for o in &d.objects {
            assert_eq!(d.videos.iter().filter(|v| v.object_id == o.object_id).count(), 5);
        }
        assert!(d.videos.iter().all(|v| v.pad_type == PadType::Plain));
    }

    #[test]
    fn splits_follow_object_roles() {
        let d = generate_dataset(&small()).unwrap();
        assert_eq!(d.objects_in(Split::Val).len(), 1);
        assert!(d.objects_in(Split::Train).is_disjoint(&d.objects_in(Split::Val)));
        // train objects contribute their last video of each part to test
        for v in d.videos.iter().filter(|v| v.object_id == "o000") {
            let expect = if v.sample_id.ends_with("s002") {
                Split::Test
            } else {
                Split::Train
            };
            assert_eq!(d.split_of(&v.sample_id), Some(expect));
        }
    }

    #[test]
    fn sigma_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let s = contact_sigma(i as f64 / 10.0, 16);
            assert!(s < prev && s > 0.0);
            prev = s;
        }
    }

    #[test]
    fn soft_part_spreads_more_than_hard_part() {
        // brute-force pixel statistics over every generated frame
        let r = PressRenderer::new(&GeneratorSpec::default());
        let soft = r.render(0.0, 5.0, PadType::Plain, 99);
        let hard = r.render(10.0, 5.0, PadType::Plain, 99);
        let mean_above_base = |frames: &[TactileFrame]| {
            let mut acc = 0.0;
            let mut n = 0usize;
            for f in frames {
                for &v in f.values() {
                    acc += v as f64;
                    n += 1;
                }
            }
            acc / n as f64
        };
        assert!(mean_above_base(&soft) > mean_above_base(&hard));
        assert!(deformation_spread(&soft) > deformation_spread(&hard));
    }

    #[test]
    fn dotted_pad_darkens_lattice() {
        let r = PressRenderer::new(&small());
        let plain = r.render(5.0, 0.0, PadType::Plain, 3);
        let dotted = r.render(5.0, 0.0, PadType::Dotted, 3);
        let (p, d) = (&plain[0], &dotted[0]);
        assert!(d.get(1, 1) < p.get(1, 1));
        assert_eq!(d.get(0, 0), p.get(0, 0));
    }
}
