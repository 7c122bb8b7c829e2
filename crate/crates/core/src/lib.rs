//! Prompt flow learning for zero-shot anomaly detection.
//!
//! The crate works on frozen-encoder embeddings: per-image patch features
//! from several encoder layers plus a class-token vector. On top of them it
//! learns prompt banks, a planar-flow prompt distribution, cross-modal
//! attention and the patch projections, and produces per-pixel anomaly maps
//! and image scores.

pub mod align;
pub mod dataio;
pub mod error;
pub mod flow;
pub mod infer_eval;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod prompt_bank;
pub mod train;

pub use dataio::{Checkpoint, EmbeddingRecord, Manifest, Sample, Split, SynthConfig};
pub use error::{DataErrorKind, PflError, Result};
pub use infer_eval::{run_inference, MetricsReport};
pub use model::{EnsembleMode, ImageFeatures, ModelConfig, PflModel, Prediction, Regularizer};
pub use numcore::{ParamSet, Rng, Tensor};
pub use train::{train_loop, TrainConfig};
