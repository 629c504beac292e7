//! Multimodal misogyny detection for memes at desk scale.
//!
//! Text and image features are produced by small encoders (or loaded from
//! embedding files), aligned into the text embedding space (convolution and projection,
//! then cross-attention over the token embedding table), then fused and classified into a binary misogyny label and one of
//! five social-domain categories. Prompt builders and a pluggable completion
//! backend produce rationales; the evaluation harness scores classifications
//! and rationales. Dataset tooling reads manifests and computes
//! corpus statistics plus annotation agreement.

pub mod dataset;
pub mod encoders;
pub mod error;
pub mod evalharness;
pub mod fusion;
pub mod heads;
pub mod model;
pub mod numkernel;
pub mod rationale;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use heads::{Category, Prediction};
pub use model::{Model, ModelConfig};
pub use numkernel::Matrix;
