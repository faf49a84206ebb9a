#![allow(dead_code)]

pub mod oracles;

use octo_core::generate::{generate_dataset, GeneratorSpec};
use octo_core::Dataset;

pub fn tiny_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        num_objects: 8,
        parts_per_object: 2,
        samples_per_part: 4,
        frames_per_video: 6,
        grid_size: 6,
        pad_mix: 0.4,
        seed,
        val_objects: 2,
        test_objects: 2,
        holdout_per_part: 1,
    }
}

pub fn tiny_dataset(seed: u64) -> Dataset {
    generate_dataset(&tiny_spec(seed)).unwrap()
}
