//! Visual-tactile-language pipeline: synthetic tactile data, salient-frame
//! selection, a contrastive + regression tactile encoder, a retrieval index
//! for description augmentation, prompt orchestration against a pluggable
//! language model, and the guessing/sorting evaluation harness.

pub mod adjectives;
pub mod embedding;
pub mod encoder;
pub mod eval;
pub mod generate;
pub mod index;
pub mod io;
pub mod llm;
pub mod pipeline;
pub mod saliency;
pub mod session;
pub mod tactile;

pub use embedding::Embedding;
pub use tactile::{Dataset, ObjectRecord, PadType, PartRecord, Split, TactileFrame, TactileVideo};
