//! MLM pre-training and classification fine-tuning.

mod masking;
mod optim;
mod schedule;

pub use masking::{mask_tokens, MaskingPolicy};
pub use optim::{clip_gradients, AdamConfig, OptimizerState};
pub use schedule::{schedule_rate, Schedule, ScheduleKind};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label};
use crate::encoder::{backward, classify, init_params, LossKind, ModelConfig, ModelParams};
use crate::eval::{auroc_of, trim_batch};
use crate::rng::{self, derive, stream};
use crate::tokenize::{encode, TokenSequence, Vocabulary};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub schedule: Schedule,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.max_len < 3 {
            return Err(Error::invalid("max_len must be at least 3"));
        }
        self.schedule.validate()?;
        self.adam.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_auroc: Option<f64>,
    pub last_lr: f64,
    /// MLM batches that had no masked position and were skipped.
    #[serde(skip_serializing_if = "is_zero")]
    pub skipped_batches: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch (1-based) whose checkpoint was returned, when selection applied.
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    /// One `step<TAB>lr<TAB>loss` line per optimizer step.
    pub fn step_log(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let _ = writeln!(out, "{}\t{:e}\t{}", s.step, s.lr, s.loss);
        }
        out
    }

    /// One JSON object per epoch.
    pub fn epoch_log(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("metrics serialize"));
            out.push('\n');
        }
        out
    }
}

fn encode_all(v: &Vocabulary, ds: &Dataset, max_len: usize) -> Result<Vec<TokenSequence>> {
    ds.records.iter().map(|r| encode(v, &r.url, max_len)).collect()
}

fn check_vocab(p: &ModelParams<f32>, v: &Vocabulary) -> Result<()> {
    if p.config.vocab_size != v.len() {
        return Err(Error::invalid(format!(
            "model vocab_size {} does not match the tokenizer's {} pieces",
            p.config.vocab_size,
            v.len()
        )));
    }
    Ok(())
}

fn shuffled(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_for(seed, &[stream::SHUFFLE, epoch as u64]));
    order
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Pre-trains a freshly initialised encoder with the MLM objective. Masks are
/// redrawn on every batch visit. The plateau schedule monitors the epoch mean
/// training loss.
pub fn pretrain_mlm(
    cfg: &ModelConfig,
    tc: &TrainConfig,
    policy: &MaskingPolicy,
    ds: &Dataset,
    v: &Vocabulary,
    seed: u64,
) -> Result<TrainOutcome> {
    let p = init_params::<f32>(cfg, derive(seed, &[stream::INIT]))?;
    pretrain_from(p, tc, policy, ds, v, seed)
}

/// MLM training continued from existing parameters.
pub fn pretrain_from(
    mut p: ModelParams<f32>,
    tc: &TrainConfig,
    policy: &MaskingPolicy,
    ds: &Dataset,
    v: &Vocabulary,
    seed: u64,
) -> Result<TrainOutcome> {
    tc.validate()?;
    policy.validate()?;
    check_vocab(&p, v)?;
    if ds.is_empty() {
        return Err(Error::invalid("pre-training dataset is empty"));
    }
    let seqs = encode_all(v, ds, tc.max_len)?;
    let per_epoch = seqs.len().div_ceil(tc.batch_size);
    let total = per_epoch * tc.epochs;
    let mut opt = OptimizerState::new(&p, tc.adam.clone())?;
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut history = Vec::new();
    let mut step = 0usize;
    for epoch in 0..tc.epochs {
        let order = shuffled(seqs.len(), seed, epoch);
        let mut losses = Vec::new();
        let mut skipped = 0;
        let mut lr = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| {
                    let s = derive(seed, &[stream::MASK, epoch as u64, i as u64]);
                    mask_tokens(&seqs[i], policy, v.len(), s)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch = trim_batch(&batch);
            let mut g = backward(&p, &batch, None, LossKind::Mlm, derive(seed, &[stream::DROPOUT, step as u64]))?;
            if g.empty_mask {
                skipped += 1;
                continue;
            }
            step += 1;
            lr = schedule_rate(&tc.schedule, step, total, &history);
            opt.step(&mut p, &mut g.grads, lr)?;
            p.check_finite()?;
            steps.push(StepLog { step, lr, loss: g.loss });
            losses.push(g.loss);
        }
        let train_loss = mean(&losses);
        history.push(train_loss);
        let m = EpochMetrics {
            epoch: epoch + 1,
            steps: losses.len(),
            train_loss,
            valid_loss: None,
            valid_auroc: None,
            last_lr: lr,
            skipped_batches: skipped,
        };
        log::info!("pretrain {}", serde_json::to_string(&m)?);
        epochs.push(m);
    }
    Ok(TrainOutcome {
        params: p,
        steps,
        epochs,
        best_epoch: None,
    })
}

/// Eval-mode mean classification loss and AUROC over `seqs`.
fn validate_model(p: &ModelParams<f32>, seqs: &[TokenSequence], labels: &[Label], batch_size: usize) -> Result<(f64, Option<f64>)> {
    let mut total = 0.0;
    let mut scores = Vec::with_capacity(seqs.len());
    for (chunk, labs) in seqs.chunks(batch_size).zip(labels.chunks(batch_size)) {
        let logits = classify(p, &trim_batch(chunk))?;
        for (row, l) in logits.rows().into_iter().zip(labs) {
            let (a, b) = (row[0] as f64, row[1] as f64);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            total += lse - if *l == Label::Phish { b } else { a };
            scores.push(1.0 / (1.0 + (a - b).exp()));
        }
    }
    Ok((total / seqs.len() as f64, auroc_of(&scores, labels)))
}

/// Fine-tunes `p` on the classification objective. After every epoch the
/// model is scored on `valid`; the returned parameters are those of the epoch
/// with the best validation AUROC (lowest validation loss when AUROC is
/// undefined because `valid` holds one class). Earlier epochs win ties.
pub fn finetune(
    p: ModelParams<f32>,
    tc: &TrainConfig,
    train: &Dataset,
    valid: &Dataset,
    v: &Vocabulary,
    seed: u64,
) -> Result<TrainOutcome> {
    tc.validate()?;
    check_vocab(&p, v)?;
    if tc.epochs == 0 {
        return Ok(TrainOutcome {
            params: p,
            steps: Vec::new(),
            epochs: Vec::new(),
            best_epoch: None,
        });
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::invalid("fine-tuning needs non-empty train and validation sets"));
    }
    let seqs = encode_all(v, train, tc.max_len)?;
    let labels = train.labels();
    let valid_seqs = encode_all(v, valid, tc.max_len)?;
    let valid_labels = valid.labels();
    let per_epoch = seqs.len().div_ceil(tc.batch_size);
    let total = per_epoch * tc.epochs;
    let mut p = p;
    let mut opt = OptimizerState::new(&p, tc.adam.clone())?;
    let mut steps = Vec::new();
    let mut epochs: Vec<EpochMetrics> = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(usize, ModelParams<f32>, Option<f64>, f64)> = None;
    let mut step = 0usize;
    for epoch in 0..tc.epochs {
        let order = shuffled(seqs.len(), seed, epoch);
        let mut losses = Vec::new();
        let mut lr = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<TokenSequence> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let labs: Vec<Label> = chunk.iter().map(|&i| labels[i]).collect();
            let mut g = backward(
                &p,
                &trim_batch(&batch),
                Some(&labs),
                LossKind::Cls,
                derive(seed, &[stream::DROPOUT, step as u64]),
            )?;
            step += 1;
            lr = schedule_rate(&tc.schedule, step, total, &history);
            opt.step(&mut p, &mut g.grads, lr)?;
            p.check_finite()?;
            steps.push(StepLog { step, lr, loss: g.loss });
            losses.push(g.loss);
        }
        let (valid_loss, valid_auroc) = validate_model(&p, &valid_seqs, &valid_labels, tc.batch_size)?;
        history.push(valid_loss);
        let m = EpochMetrics {
            epoch: epoch + 1,
            steps: losses.len(),
            train_loss: mean(&losses),
            valid_loss: Some(valid_loss),
            valid_auroc,
            last_lr: lr,
            skipped_batches: 0,
        };
        log::info!("finetune {}", serde_json::to_string(&m)?);
        epochs.push(m);
        let better = match &best {
            None => true,
            Some((_, _, best_auc, best_loss)) => match (valid_auroc, best_auc) {
                (Some(a), Some(b)) => a > *b,
                _ => valid_loss < *best_loss,
            },
        };
        if better {
            best = Some((epoch + 1, p.clone(), valid_auroc, valid_loss));
        }
    }
    let (best_epoch, params, _, _) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        steps,
        epochs,
        best_epoch: Some(best_epoch),
    })
}
