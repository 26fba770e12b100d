//! The question generator: contextual encoders, coattention with dynamic
//! reasoning, and the pointer-generator decoder with its search routines.

pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod reasoning;
pub mod redr;
pub mod search;

pub use config::TrainConfig;
pub use redr::{Encoded, InferenceDecoder, Redr, SequenceScore, StepTrace};
pub use search::{argmax, beam_search, greedy_decode, Hypothesis, StepModel};
