//! Phishing URL detection with subword tokenizers and a from-scratch
//! transformer encoder.
//!
//! The crate is organised along the pipeline:
//!
//! - [`corpus`]: labelled URL datasets and URL decomposition
//! - [`tokenize`]: byte/char-level BPE training, wordpiece import, fixed-length encoding
//! - [`encoder`]: transformer encoder with MLM and classification heads, exact gradients
//! - [`train`]: dynamic masking, Adam, learning-rate schedules, pre-training and fine-tuning loops
//! - [`adversary`]: homoglyph, compound and parameter-reordering perturbations
//! - [`eval`]: ROC construction, TPR at fixed FPR, AUROC and threshold metrics
//! - [`pipeline`]: the end-to-end desk run used by the `demo` command

pub mod adversary;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tokenize;
pub mod train;

pub use error::{Error, Result};
