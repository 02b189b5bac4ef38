//! Group emotion recognition from first principles.
//!
//! Two independent judgments about a group photo are formed and then fused:
//! a bottom-up pass classifies each face with a small convolutional network
//! and averages the results, while a top-down pass infers the scene's mood
//! from descriptor words through a naive-Bayes network. Fusion feeds the
//! bottom-up verdict into the network as an extra evidence node whose
//! conditional table is the classifier's own validation confusion matrix,
//! so the scene model knows exactly how far to trust it.
//!
//! Everything is deterministic given a seed: training, searches, and every
//! file the `gremo` binary writes.

pub mod bottom_up;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod top_down;

mod blob;

pub use error::{Error, Result};
pub use fusion::FusionMode;
pub use preprocess::Label;
pub use tensor::Tensor;
