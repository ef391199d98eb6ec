use rand::Rng;
use urltran::corpus::{Dataset, Label, UrlRecord};
use urltran::encoder::{init_params, ModelConfig, ModelParams};
use urltran::rng;
use urltran::tokenize::{encode, train_bpe, TokenSequence, VocabKind, Vocabulary, CLS_ID, MASK_ID, PAD_ID, SEP_ID};
use urltran::train::{
    finetune, mask_tokens, pretrain_from, pretrain_mlm, AdamConfig, MaskingPolicy, Schedule, ScheduleKind,
    TrainConfig,
};

fn toy_urls(n: usize, seed: u64) -> Vec<(String, Label)> {
    let words = ["login", "secure", "account", "mail", "shop", "news", "update", "bank", "photo", "docs"];
    let mut r = rng::rng(seed);
    (0..n)
        .map(|i| {
            let phish = i % 2 == 0;
            let a = words[r.random_range(0..words.len())];
            let b = words[r.random_range(0..words.len())];
            let url = if phish {
                format!("http://{a}-{b}.verify-now.xyz/{b}.php?id={}", r.random_range(0..1000))
            } else {
                format!("https://www.{a}{b}.com/{a}/{}", r.random_range(0..1000))
            };
            (url, if phish { Label::Phish } else { Label::Benign })
        })
        .collect()
}

fn dataset(items: &[(String, Label)]) -> Dataset {
    Dataset::new(items.iter().map(|(u, l)| UrlRecord::new(u.as_str(), *l).unwrap()).collect())
}

fn vocab_for(items: &[(String, Label)]) -> Vocabulary {
    let urls: Vec<String> = items.iter().map(|(u, _)| u.clone()).collect();
    train_bpe(&urls, 260 + 120, VocabKind::ByteBpe).unwrap()
}

fn desk_train(epochs: usize, rate: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        max_len: 48,
        schedule: Schedule::new(ScheduleKind::LinearWarmupLinearDecay, rate),
        adam: AdamConfig::default(),
    }
}

#[test]
fn masking_rates_over_100k_positions() {
    let policy = MaskingPolicy::default();
    let mut r = rng::rng(3);
    let (mut eligible, mut selected, mut masked, mut kept, mut random) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut i = 0u64;
    while eligible < 100_000 {
        let content: Vec<u32> = (0..30).map(|_| r.random_range(5..500)).collect();
        let mut ids = vec![CLS_ID];
        ids.extend(&content);
        ids.push(SEP_ID);
        ids.extend([PAD_ID; 4]);
        let seq = TokenSequence {
            attention_mask: ids.iter().map(|&id| u8::from(id != PAD_ID)).collect(),
            ids,
            mlm_labels: None,
        };
        let out = mask_tokens(&seq, &policy, 500, i).unwrap();
        i += 1;
        eligible += content.len();
        for (t, lab) in out.mlm_labels.unwrap().iter().enumerate() {
            if let Some(orig) = lab {
                selected += 1;
                assert_eq!(*orig, seq.ids[t]);
                let now = out.ids[t];
                if now == MASK_ID {
                    masked += 1;
                } else if now == *orig {
                    // A random draw may land on the original id; count it with "kept".
                    kept += 1;
                } else {
                    assert!(now >= 5);
                    random += 1;
                }
            } else {
                assert_eq!(out.ids[t], seq.ids[t]);
            }
        }
    }
    let rate = selected as f64 / eligible as f64;
    assert!((0.145..=0.155).contains(&rate), "selection rate {rate}");
    let s = selected as f64;
    assert!((masked as f64 / s - 0.8).abs() < 0.01);
    // About 0.1 / 495 of selections are random draws that hit the original id.
    assert!((kept as f64 / s - 0.1).abs() < 0.01);
    assert!((random as f64 / s - 0.1).abs() < 0.01);
}

#[test]
fn specials_and_padding_never_selected() {
    let policy = MaskingPolicy {
        select_prob: 0.9,
        ..Default::default()
    };
    let mut r = rng::rng(8);
    for i in 0..10_000u64 {
        let n = r.random_range(0..12);
        let mut ids = vec![CLS_ID];
        ids.extend((0..n).map(|_| r.random_range(1..40u32)));
        ids.push(SEP_ID);
        let attended = ids.len();
        ids.resize(16, PAD_ID);
        let mask: Vec<u8> = (0..16).map(|t| u8::from(t < attended)).collect();
        let seq = TokenSequence {
            ids,
            attention_mask: mask,
            mlm_labels: None,
        };
        let out = mask_tokens(&seq, &policy, 40, i).unwrap();
        for (t, lab) in out.mlm_labels.unwrap().iter().enumerate() {
            let id = seq.ids[t];
            if [CLS_ID, SEP_ID, PAD_ID].contains(&id) || t >= attended {
                assert!(lab.is_none());
                assert_eq!(out.ids[t], id);
            }
        }
    }
}

#[test]
fn zero_rate_pretraining_returns_initial_params() {
    let items = toy_urls(40, 1);
    let v = vocab_for(&items);
    let cfg = ModelConfig::desk(v.len());
    let p: ModelParams<f32> = init_params(&cfg, 5).unwrap();
    let out = pretrain_from(p.clone(), &desk_train(1, 0.0), &MaskingPolicy::default(), &dataset(&items), &v, 2).unwrap();
    assert_eq!(out.params, p);
    assert!(!out.steps.is_empty());
}

#[test]
fn pretraining_reduces_mlm_loss_and_is_deterministic() {
    let items = toy_urls(64, 2);
    let v = vocab_for(&items);
    let cfg = ModelConfig::desk(v.len());
    let tc = TrainConfig {
        batch_size: 32,
        ..desk_train(30, 1e-3)
    };
    let ds = dataset(&items);
    let a = pretrain_mlm(&cfg, &tc, &MaskingPolicy::default(), &ds, &v, 11).unwrap();
    let first = a.epochs.first().unwrap().train_loss;
    let last = a.epochs.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
    let b = pretrain_mlm(&cfg, &tc, &MaskingPolicy::default(), &ds, &v, 11).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.step_log(), b.step_log());
    let log = a.step_log();
    let lines: Vec<&str> = log.lines().take(2).collect();
    assert_eq!(lines[0].split('\t').count(), 3);
    assert!(a.epoch_log().lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn empty_pretraining_set_rejected() {
    let items = toy_urls(8, 2);
    let v = vocab_for(&items);
    let ds = Dataset::new(Vec::new());
    let r = pretrain_mlm(&ModelConfig::desk(v.len()), &desk_train(1, 1e-3), &MaskingPolicy::default(), &ds, &v, 0);
    assert!(r.is_err());
}

#[test]
fn finetune_zero_epochs_is_identity_and_vocab_checked() {
    let items = toy_urls(20, 3);
    let v = vocab_for(&items);
    let p: ModelParams<f32> = init_params(&ModelConfig::desk(v.len()), 1).unwrap();
    let ds = dataset(&items);
    let out = finetune(p.clone(), &desk_train(0, 1e-3), &ds, &ds, &v, 0).unwrap();
    assert_eq!(out.params, p);
    let wrong: ModelParams<f32> = init_params(&ModelConfig::desk(v.len() + 3), 1).unwrap();
    assert!(finetune(wrong, &desk_train(1, 1e-3), &ds, &ds, &v, 0).is_err());
}

#[test]
fn finetune_separates_toy_classes_and_returns_best_epoch() {
    let items = toy_urls(128, 4);
    let valid = toy_urls(40, 5);
    let v = vocab_for(&items);
    let p: ModelParams<f32> = init_params(&ModelConfig::desk(v.len()), 1).unwrap();
    let tc = desk_train(6, 1e-3);
    let out = finetune(p, &tc, &dataset(&items), &dataset(&valid), &v, 9).unwrap();
    let best = out.best_epoch.unwrap();
    let best_auc = out.epochs[best - 1].valid_auroc.unwrap();
    assert!(out.epochs.iter().all(|e| e.valid_auroc.unwrap() <= best_auc));
    assert!(best_auc > 0.95, "{best_auc}");
    let seqs: Vec<TokenSequence> = valid.iter().map(|(u, _)| encode(&v, u, 48).unwrap()).collect();
    let scores = urltran::encoder::phish_scores(&out.params, &seqs).unwrap();
    let auc = urltran::eval::auroc_of(&scores, &valid.iter().map(|x| x.1).collect::<Vec<_>>()).unwrap();
    assert_eq!(auc, best_auc);
}
