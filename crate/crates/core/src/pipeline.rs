//! End-to-end desk run: corpus, split, tokenizer, MLM pre-training, clean and
//! adversarial fine-tuning, and evaluation on clean and augmented test sets.
//! Every artifact is written under one output directory and depends only on
//! the [`RunConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{build_adversarial_dataset, AugmentReport, HomoglyphTable, WordDictionary};
use crate::config::RunConfig;
use crate::corpus::{downsample_benign, load_dataset, split_dataset, Dataset, DatasetFormat, SplitTag};
use crate::encoder::{save_checkpoint, ModelParams};
use crate::eval::{evaluate, predictions_to_tsv, roc_svg, score_dataset, EvalReport};
use crate::rng::derive;
use crate::synth::{synthetic_corpus, SynthConfig};
use crate::tokenize::{load_wordpiece_vocab, train_bpe, VocabKind, Vocabulary};
use crate::train::{finetune, pretrain_mlm, TrainOutcome};
use crate::{Error, Result};

const SCORE_BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub corpus: usize,
    pub corpus_phish: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub train_augmented: usize,
    pub valid_augmented: usize,
    pub test_augmented: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub auroc: f64,
    pub tpr_at_target_fpr: f64,
    pub accuracy_at_half: f64,
    pub f1_at_half: f64,
}

impl From<&EvalReport> for Headline {
    fn from(r: &EvalReport) -> Self {
        Self {
            auroc: r.auroc,
            tpr_at_target_fpr: r.tpr_at_target_fpr,
            accuracy_at_half: r.at_default_threshold.accuracy,
            f1_at_half: r.at_default_threshold.f1,
        }
    }
}

/// Summary written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub sizes: SplitSizes,
    pub vocab_size: usize,
    pub target_fpr: f64,
    pub pretrain_first_epoch_loss: f64,
    pub pretrain_last_epoch_loss: f64,
    pub clean_best_epoch: Option<usize>,
    pub adversarial_best_epoch: Option<usize>,
    pub augment: [AugmentReport; 3],
    pub clean_model_on_test: Headline,
    pub clean_model_on_augmented_test: Headline,
    pub adversarial_model_on_test: Headline,
    pub adversarial_model_on_augmented_test: Headline,
}

struct Out<'a> {
    dir: &'a Path,
}

impl Out<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    }

    fn dataset(&self, name: &str, d: &Dataset, format: DatasetFormat) -> Result<()> {
        d.save(self.path(name), format)
    }

    fn training(&self, stem: &str, t: &TrainOutcome) -> Result<()> {
        self.write(&format!("{stem}.steps.tsv"), &t.step_log())?;
        self.write(&format!("{stem}.epochs.jsonl"), &t.epoch_log())?;
        save_checkpoint(&t.params, &self.path(&format!("{stem}.ckpt.json")))
    }

    fn evaluation(
        &self,
        stem: &str,
        p: &ModelParams<f32>,
        v: &Vocabulary,
        d: &Dataset,
        cfg: &RunConfig,
    ) -> Result<EvalReport> {
        let preds = score_dataset(p, v, d, cfg.tokenizer.max_seq_length, SCORE_BATCH)?;
        let report = evaluate(&preds, cfg.data.target_fpr)?;
        self.write(&format!("{stem}.predictions.tsv"), &predictions_to_tsv(&preds))?;
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        self.write(&format!("{stem}.eval.json"), &json)?;
        self.write(&format!("{stem}.roc.svg"), &roc_svg(&report.roc, cfg.data.target_fpr.max(1e-6)))?;
        log::info!("{stem}: auroc {:.4}, tpr@{} {:.4}", report.auroc, cfg.data.target_fpr, report.tpr_at_target_fpr);
        Ok(report)
    }
}

fn vocabulary(cfg: &RunConfig, train: &Dataset) -> Result<Vocabulary> {
    match cfg.tokenizer.tokenizer_type {
        VocabKind::Wordpiece => {
            let path = cfg
                .paths
                .vocab
                .as_ref()
                .ok_or_else(|| Error::invalid("wordpiece runs need paths.vocab"))?;
            load_wordpiece_vocab(path)
        }
        kind => {
            let urls: Vec<String> = train.urls().map(str::to_string).collect();
            train_bpe(&urls, cfg.tokenizer.vocab_size, kind)
        }
    }
}

/// Runs every stage and writes its artifacts into `out_dir` (created if
/// missing). Reruns with the same config overwrite identical bytes.
pub fn run_pipeline(cfg: &RunConfig, out_dir: impl AsRef<Path>) -> Result<PipelineReport> {
    cfg.validate()?;
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = Out { dir };
    out.write("run_config.json", &cfg.to_json())?;
    let seeds = cfg.seeds;

    let corpus = match &cfg.paths.data {
        Some(p) => load_dataset(p, DatasetFormat::Tsv)?,
        None => synthetic_corpus(
            &SynthConfig {
                size: cfg.data.synthetic_size,
                phish_fraction: cfg.data.synthetic_phish_fraction,
            },
            seeds.synth,
        )?,
    };
    out.dataset("corpus.tsv", &corpus, DatasetFormat::Tsv)?;

    let (train, valid, test) = split_dataset(&corpus, cfg.data.split, seeds.split)?;
    let ratio = cfg.data.downsample_ratio;
    let train = downsample_benign(&train, ratio, derive(seeds.downsample, &[0]))?.with_split(SplitTag::Train);
    let valid = downsample_benign(&valid, ratio, derive(seeds.downsample, &[1]))?.with_split(SplitTag::Valid);
    let test = test.with_split(SplitTag::Test);
    out.dataset("train.tsv", &train, DatasetFormat::Tsv)?;
    out.dataset("valid.tsv", &valid, DatasetFormat::Tsv)?;
    out.dataset("test.tsv", &test, DatasetFormat::Tsv)?;

    let v = vocabulary(cfg, &train)?;
    v.save(out.path("vocab.json"))?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.vocab_size = v.len();
    log::info!("vocabulary: {} pieces; train {} / valid {} / test {}", v.len(), train.len(), valid.len(), test.len());

    let pre = pretrain_mlm(&model_cfg, &cfg.pretrain_config(), &cfg.masking, &train, &v, seeds.pretrain)?;
    out.training("pretrain", &pre)?;
    let first = pre.epochs.first().map_or(f64::NAN, |e| e.train_loss);
    let last = pre.epochs.last().map_or(f64::NAN, |e| e.train_loss);
    log::info!("pretraining: epoch loss {first:.4} -> {last:.4}");

    let ft = cfg.finetune_config();
    let clean = finetune(pre.params.clone(), &ft, &train, &valid, &v, seeds.finetune)?;
    out.training("clean", &clean)?;

    let table = HomoglyphTable::builtin();
    let dict = WordDictionary::builtin();
    let augment = |d: &Dataset, k: u64| build_adversarial_dataset(d, &table, &dict, derive(seeds.augment, &[k]));
    let (train_aug, rep_train) = augment(&train, 0)?;
    let (valid_aug, rep_valid) = augment(&valid, 1)?;
    let (test_aug, rep_test) = augment(&test, 2)?;
    out.dataset("train.augmented.tsv", &train_aug, DatasetFormat::OriginTsv)?;
    out.dataset("valid.augmented.tsv", &valid_aug, DatasetFormat::OriginTsv)?;
    out.dataset("test.augmented.tsv", &test_aug, DatasetFormat::OriginTsv)?;

    let adv = finetune(pre.params, &ft, &train_aug, &valid_aug, &v, seeds.adversarial_finetune)?;
    out.training("adversarial", &adv)?;

    let c_test = out.evaluation("clean.test", &clean.params, &v, &test, cfg)?;
    let c_aug = out.evaluation("clean.test_augmented", &clean.params, &v, &test_aug, cfg)?;
    let a_test = out.evaluation("adversarial.test", &adv.params, &v, &test, cfg)?;
    let a_aug = out.evaluation("adversarial.test_augmented", &adv.params, &v, &test_aug, cfg)?;

    let report = PipelineReport {
        sizes: SplitSizes {
            corpus: corpus.len(),
            corpus_phish: corpus.phish_count(),
            train: train.len(),
            valid: valid.len(),
            test: test.len(),
            train_augmented: train_aug.len(),
            valid_augmented: valid_aug.len(),
            test_augmented: test_aug.len(),
        },
        vocab_size: v.len(),
        target_fpr: cfg.data.target_fpr,
        pretrain_first_epoch_loss: first,
        pretrain_last_epoch_loss: last,
        clean_best_epoch: clean.best_epoch,
        adversarial_best_epoch: adv.best_epoch,
        augment: [rep_train, rep_valid, rep_test],
        clean_model_on_test: (&c_test).into(),
        clean_model_on_augmented_test: (&c_aug).into(),
        adversarial_model_on_test: (&a_test).into(),
        adversarial_model_on_augmented_test: (&a_aug).into(),
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    out.write("report.json", &json)?;
    Ok(report)
}
