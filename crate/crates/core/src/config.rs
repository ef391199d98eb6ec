//! Run configuration shared by the CLI and the desk pipeline.
//!
//! Training keys follow the hyperparameter names used by common BERT/RoBERTa
//! recipes (`peak_learning_rate`, `lr_shrink`, `adam_beta2`, ...) and the
//! model block uses `config.json` keys, so published presets transcribe
//! field by field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SplitFractions;
use crate::encoder::ModelConfig;
use crate::rng::derive;
use crate::tokenize::VocabKind;
use crate::train::{AdamConfig, MaskingPolicy, Schedule, ScheduleKind, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerConfig {
    pub tokenizer_type: VocabKind,
    /// Requested size for trained vocabularies; ignored for wordpiece.
    pub vocab_size: usize,
    pub max_seq_length: usize,
}

fn default_shrink() -> f64 {
    0.5
}

fn default_patience() -> usize {
    1
}

/// One training stage (pre-training or fine-tuning).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub peak_learning_rate: f64,
    pub learning_rate_decay: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_ratio: Option<f64>,
    #[serde(default = "default_shrink")]
    pub lr_shrink: f64,
    #[serde(default = "default_patience")]
    pub lr_patience: usize,
    pub weight_decay: f64,
    pub adam_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub gradient_clipping: f64,
}

impl StageConfig {
    pub fn train_config(&self, max_len: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.max_epochs,
            batch_size: self.batch_size,
            max_len,
            schedule: Schedule {
                kind: self.learning_rate_decay,
                peak_rate: self.peak_learning_rate,
                warmup_steps: self.warmup_steps,
                warmup_ratio: self.warmup_ratio,
                shrink: self.lr_shrink,
                patience: self.lr_patience,
                cycle_steps: None,
            },
            adam: AdamConfig {
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                epsilon: self.adam_epsilon,
                weight_decay: self.weight_decay,
                clip_norm: self.gradient_clipping,
            },
        }
    }
}

fn default_ratio() -> usize {
    20
}

fn default_fpr() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Benign records kept per phish record in train and valid. The test split
    /// is never downsampled.
    #[serde(default = "default_ratio")]
    pub downsample_ratio: usize,
    pub split: SplitFractions,
    #[serde(default = "default_fpr")]
    pub target_fpr: f64,
    /// Size of the generated corpus when no data path is given.
    pub synthetic_size: usize,
    pub synthetic_phish_fraction: f64,
}

/// One seed per randomized stage. There are no implicit defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub synth: u64,
    pub split: u64,
    pub downsample: u64,
    pub pretrain: u64,
    pub finetune: u64,
    pub augment: u64,
    pub adversarial_finetune: u64,
}

impl Seeds {
    /// Expands a single `--seed` into independent stage seeds.
    pub fn from_master(seed: u64) -> Self {
        let s = |tag: u64| derive(seed, &[0x5EED, tag]);
        Self {
            synth: s(1),
            split: s(2),
            downsample: s(3),
            pretrain: s(4),
            finetune: s(5),
            augment: s(6),
            adversarial_finetune: s(7),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: Paths,
    pub tokenizer: TokenizerConfig,
    /// `vocab_size` here is overwritten by the tokenizer's actual size.
    pub model: ModelConfig,
    pub masking: MaskingPolicy,
    pub pretrain: StageConfig,
    pub finetune: StageConfig,
    pub data: DataConfig,
    pub seeds: Seeds,
}

const DESK: &str = include_str!("../../../configs/desk.json");

impl RunConfig {
    /// Parses a config file. Files may omit `seeds`, in which case `seed`
    /// must be given and supplies them; giving both is an error.
    pub fn from_json(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Format("config must be a JSON object".into()))?;
        match (obj.contains_key("seeds"), seed) {
            (true, Some(_)) => {
                return Err(Error::invalid("config file already lists stage seeds; drop --seed or the seeds block"))
            }
            (false, None) => return Err(Error::invalid("no seeds: pass --seed or add a seeds block")),
            (false, Some(s)) => {
                obj.insert("seeds".into(), serde_json::to_value(Seeds::from_master(s))?);
            }
            (true, None) => {}
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, seed)
    }

    /// The bundled desk preset.
    pub fn desk(seed: u64) -> Self {
        Self::from_json(DESK, Some(seed)).expect("bundled desk preset is valid")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        self.pretrain.train_config(self.tokenizer.max_seq_length)
    }

    pub fn finetune_config(&self) -> TrainConfig {
        self.finetune.train_config(self.tokenizer.max_seq_length)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokenizer.max_seq_length > self.model.max_position_embeddings {
            return Err(Error::invalid(format!(
                "max_seq_length {} exceeds max_position_embeddings {}",
                self.tokenizer.max_seq_length, self.model.max_position_embeddings
            )));
        }
        if self.tokenizer.tokenizer_type.is_bpe() && self.tokenizer.vocab_size < 261 {
            return Err(Error::invalid("BPE vocab_size must cover the 256 byte symbols and 5 specials"));
        }
        self.model.validate()?;
        self.masking.validate()?;
        self.pretrain_config().validate()?;
        self.finetune_config().validate()?;
        if self.data.downsample_ratio == 0 || !(0.0..=1.0).contains(&self.data.target_fpr) {
            return Err(Error::invalid("downsample_ratio must be positive and target_fpr in [0, 1]"));
        }
        Ok(())
    }
}
