//! Transformer encoder with an MLM head and a pooled two-class head.
//!
//! Layers are post-norm (residual, then layer norm) with exact GELU. Padding
//! keys are excluded from every attention softmax, so trailing `[PAD]`
//! columns do not change any attended position's output.

mod checkpoint;
mod config;
mod loss;
mod model;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ModelConfig;
pub use loss::{classification_loss, mlm_loss, MlmLoss};
pub use model::{backward, classify, forward, phish_scores, BatchOutput, Gradients, LossKind, Mode};
pub use params::{init_params, is_weight, Dense, EncoderLayer, Float, LayerNorm, ModelParams};
