use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn default_true() -> bool {
    true
}

fn default_gelu() -> String {
    "gelu".to_string()
}

fn default_ln_eps() -> f64 {
    1e-12
}

/// Encoder architecture. Field names follow the usual BERT `config.json` keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_hidden_layers: usize,
    pub hidden_size: usize,
    pub intermediate_size: usize,
    pub num_attention_heads: usize,
    /// Derived from `hidden_size / num_attention_heads` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_head_size: Option<usize>,
    pub max_position_embeddings: usize,
    pub vocab_size: usize,
    pub hidden_dropout_prob: f64,
    pub attention_probs_dropout_prob: f64,
    pub initializer_range: f64,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_gelu")]
    pub hidden_act: String,
    /// 0 disables segment embeddings; inputs are always single-segment.
    #[serde(default)]
    pub type_vocab_size: usize,
    /// Dense + tanh over the `[CLS]` state; when off the raw state feeds the classifier.
    #[serde(default = "default_true")]
    pub use_pooler: bool,
}

impl ModelConfig {
    /// Small config used by tests and the desk pipeline.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            num_hidden_layers: 2,
            hidden_size: 64,
            intermediate_size: 256,
            num_attention_heads: 4,
            attention_head_size: None,
            max_position_embeddings: 64,
            vocab_size,
            hidden_dropout_prob: 0.1,
            attention_probs_dropout_prob: 0.1,
            initializer_range: 0.02,
            layer_norm_eps: 1e-12,
            hidden_act: default_gelu(),
            type_vocab_size: 0,
            use_pooler: true,
        }
    }

    /// BERT-base shape (12 x 768, 12 heads, 30522 wordpieces, 512 positions).
    pub fn bert_base() -> Self {
        Self {
            num_hidden_layers: 12,
            hidden_size: 768,
            intermediate_size: 3072,
            num_attention_heads: 12,
            attention_head_size: Some(64),
            max_position_embeddings: 512,
            vocab_size: 30522,
            type_vocab_size: 2,
            ..Self::desk(30522)
        }
    }

    /// 3-layer custom-vocabulary encoder with a 10k byte-level BPE vocabulary.
    pub fn custom_vocab() -> Self {
        Self {
            num_hidden_layers: 3,
            max_position_embeddings: 128,
            vocab_size: 10_000,
            type_vocab_size: 0,
            ..Self::bert_base()
        }
    }

    pub fn head_size(&self) -> usize {
        self.attention_head_size
            .unwrap_or(self.hidden_size / self.num_attention_heads.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_hidden_layers", self.num_hidden_layers),
            ("hidden_size", self.hidden_size),
            ("intermediate_size", self.intermediate_size),
            ("num_attention_heads", self.num_attention_heads),
            ("max_position_embeddings", self.max_position_embeddings),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !self.hidden_size.is_multiple_of(self.num_attention_heads) {
            return Err(Error::invalid(format!(
                "hidden_size {} is not divisible by num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            )));
        }
        if let Some(h) = self.attention_head_size {
            if h * self.num_attention_heads != self.hidden_size {
                return Err(Error::invalid(format!(
                    "attention_head_size {h} x {} heads != hidden_size {}",
                    self.num_attention_heads, self.hidden_size
                )));
            }
        }
        for (name, p) in [
            ("hidden_dropout_prob", self.hidden_dropout_prob),
            ("attention_probs_dropout_prob", self.attention_probs_dropout_prob),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        if [self.initializer_range, self.layer_norm_eps].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(Error::invalid("initializer_range and layer_norm_eps must be positive"));
        }
        if self.hidden_act != "gelu" {
            return Err(Error::invalid(format!("unsupported hidden_act {:?}", self.hidden_act)));
        }
        if self.type_vocab_size > 2 {
            return Err(Error::invalid("type_vocab_size must be 0, 1 or 2"));
        }
        Ok(())
    }
}
