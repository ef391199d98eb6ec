use urltran::corpus::Label;
use urltran::encoder::{
    backward, classification_loss, classify, forward, init_params, mlm_loss, LossKind, Mode, ModelConfig,
    ModelParams,
};
use urltran::rng;
use urltran::tokenize::{TokenSequence, CLS_ID, PAD_ID, SEP_ID};

use rand::Rng;

fn seq(content: &[u32], len: usize) -> TokenSequence {
    let mut ids = vec![CLS_ID];
    ids.extend_from_slice(content);
    ids.push(SEP_ID);
    let mut mask = vec![1u8; ids.len()];
    ids.resize(len, PAD_ID);
    mask.resize(len, 0);
    TokenSequence {
        ids,
        attention_mask: mask,
        mlm_labels: None,
    }
}

fn tiny(vocab: usize, dropout: f64, range: f64) -> ModelConfig {
    ModelConfig {
        num_hidden_layers: 2,
        hidden_size: 16,
        intermediate_size: 24,
        num_attention_heads: 2,
        max_position_embeddings: 8,
        hidden_dropout_prob: dropout,
        attention_probs_dropout_prob: dropout,
        initializer_range: range,
        ..ModelConfig::desk(vocab)
    }
}

/// Plain-loop forward over one unpadded sequence: no masks, no batching.
fn reference_logits(p: &ModelParams<f64>, ids: &[u32]) -> [f64; 2] {
    let cfg = &p.config;
    let h = cfg.hidden_size;
    let heads = cfg.num_attention_heads;
    let dh = h / heads;
    let eps = cfg.layer_norm_eps;
    let affine = |w: &ndarray::Array2<f64>, b: &ndarray::Array1<f64>, x: &[f64]| -> Vec<f64> {
        (0..w.nrows())
            .map(|o| b[o] + (0..w.ncols()).map(|i| w[[o, i]] * x[i]).sum::<f64>())
            .collect()
    };
    let norm = |g: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>, x: &[f64]| -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        x.iter()
            .enumerate()
            .map(|(i, v)| g[i] * (v - mean) / (var + eps).sqrt() + b[i])
            .collect()
    };
    let gelu = |x: f64| 0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()));
    let mut xs: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(t, &id)| {
            let e: Vec<f64> = (0..h)
                .map(|j| p.token_embedding[[id as usize, j]] + p.position_embedding[[t, j]])
                .collect();
            norm(&p.embedding_norm.gamma, &p.embedding_norm.beta, &e)
        })
        .collect();
    for l in &p.layers {
        let q: Vec<_> = xs.iter().map(|x| affine(&l.query.weight, &l.query.bias, x)).collect();
        let k: Vec<_> = xs.iter().map(|x| affine(&l.key.weight, &l.key.bias, x)).collect();
        let v: Vec<_> = xs.iter().map(|x| affine(&l.value.weight, &l.value.bias, x)).collect();
        let n = xs.len();
        let mut next = Vec::new();
        for t in 0..n {
            let mut ctx = vec![0.0; h];
            for hd in 0..heads {
                let r = hd * dh..(hd + 1) * dh;
                let scores: Vec<f64> = (0..n)
                    .map(|j| r.clone().map(|c| q[t][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                for j in 0..n {
                    let w = (scores[j] - m).exp() / z;
                    for c in r.clone() {
                        ctx[c] += w * v[j][c];
                    }
                }
            }
            let a = affine(&l.attn_out.weight, &l.attn_out.bias, &ctx);
            let r1: Vec<f64> = a.iter().zip(&xs[t]).map(|(a, b)| a + b).collect();
            let h1 = norm(&l.attn_norm.gamma, &l.attn_norm.beta, &r1);
            let u: Vec<f64> = affine(&l.ffn_in.weight, &l.ffn_in.bias, &h1).into_iter().map(gelu).collect();
            let f = affine(&l.ffn_out.weight, &l.ffn_out.bias, &u);
            let r2: Vec<f64> = f.iter().zip(&h1).map(|(a, b)| a + b).collect();
            next.push(norm(&l.ffn_norm.gamma, &l.ffn_norm.beta, &r2));
        }
        xs = next;
    }
    let pl = p.pooler.as_ref().unwrap();
    let pooled: Vec<f64> = affine(&pl.weight, &pl.bias, &xs[0]).into_iter().map(f64::tanh).collect();
    let out = affine(&p.classifier.weight, &p.classifier.bias, &pooled);
    [out[0], out[1]]
}

#[test]
fn padded_forward_matches_unpadded_reference() {
    for s in 0..3u64 {
        let p: ModelParams<f64> = init_params(&tiny(30, 0.1, 0.3), s).unwrap();
        let content = [5u32, 9, 17, 22];
        let want = reference_logits(&p, &seq(&content, 6).ids);
        for len in [6, 7, 8] {
            let got = classify(&p, &[seq(&content, len)]).unwrap();
            for c in 0..2 {
                assert!((got[[0, c]] - want[c]).abs() < 1e-10, "len {len}: {} vs {}", got[[0, c]], want[c]);
            }
        }
    }
}

#[test]
fn padding_invariance_single_precision() {
    let p: ModelParams<f32> = init_params(&ModelConfig::desk(50), 11).unwrap();
    let content = [7u32, 8, 9, 30, 31, 40];
    let a = seq(&content, 8);
    let b = seq(&content, 40);
    let la = classify(&p, &[a]).unwrap();
    let other = seq(&[11, 12], 40);
    let lb = classify(&p, &[other, b]).unwrap();
    for c in 0..2 {
        assert!((la[[0, c]] - lb[[1, c]]).abs() < 1e-6);
    }
}

fn random_batch(seed: u64, vocab: u32, with_mlm: bool) -> (Vec<TokenSequence>, Vec<Label>) {
    let mut r = rng::rng(seed);
    let mut batch = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..3 {
        let n = r.random_range(1..=5);
        let content: Vec<u32> = (0..n).map(|_| r.random_range(5..vocab)).collect();
        let mut s = seq(&content, 8);
        if with_mlm {
            let mut labs = vec![None; 8];
            for t in 1..=n {
                if r.random_bool(0.5) {
                    labs[t] = Some(s.ids[t]);
                    s.ids[t] = 4;
                }
            }
            labs[1] = Some(r.random_range(5..vocab));
            s.mlm_labels = Some(labs);
        }
        batch.push(s);
        labels.push(if r.random_bool(0.5) { Label::Phish } else { Label::Benign });
    }
    (batch, labels)
}

fn loss_of(p: &ModelParams<f64>, batch: &[TokenSequence], labels: &[Label], kind: LossKind, mode: Mode, seed: u64) -> f64 {
    let out = forward(p, batch, mode, seed).unwrap();
    match kind {
        LossKind::Cls => classification_loss(&out, labels).unwrap(),
        LossKind::Mlm => {
            let labs: Vec<_> = batch.iter().map(|s| s.mlm_labels.clone().unwrap()).collect();
            mlm_loss(&out, &labs).unwrap().loss
        }
    }
}

const EPS: f64 = 1e-3;
const FLOOR: f64 = 1e-6;

/// Worst relative error between analytic gradients and central differences.
/// Central differences at `EPS` and `EPS / 2` are combined (Richardson) so the
/// O(eps^2) truncation term cancels; plain differences at `EPS` are dominated
/// by curvature at the 1e-3 level for small entries. Denominators are floored
/// at `FLOOR` because some gradients (key biases) are exactly zero and the
/// differences there are pure round-off.
fn check_gradients(p: &ModelParams<f64>, kind: LossKind, data_seed: u64, drop_seed: u64) -> (f64, usize) {
    let (batch, labels) = random_batch(data_seed, p.config.vocab_size as u32, kind == LossKind::Mlm);
    let mode = Mode::Train;
    let g = backward(p, &batch, Some(&labels), kind, drop_seed).unwrap();
    let l0 = loss_of(p, &batch, &labels, kind, mode, drop_seed);
    assert!((g.loss - l0).abs() < 1e-12, "{} vs {l0}", g.loss);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut q = p.clone();
    let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = g.grads.tensors().into_iter().map(|(_, t)| t.iter().copied().collect()).collect();
    for (ti, name) in names.iter().enumerate() {
        let n = grads[ti].len();
        for e in 0..n {
            let orig = p.tensors()[ti].1.iter().nth(e).copied().unwrap();
            let set = |q: &mut ModelParams<f64>, v: f64| {
                let mut ts = q.tensors_mut();
                *ts[ti].1.iter_mut().nth(e).unwrap() = v;
            };
            set(&mut q, orig + EPS);
            let up = loss_of(&q, &batch, &labels, kind, mode, drop_seed);
            set(&mut q, orig - EPS);
            let down = loss_of(&q, &batch, &labels, kind, mode, drop_seed);
            set(&mut q, orig);
            let coarse = (up - down) / (2.0 * EPS);
            set(&mut q, orig + EPS / 2.0);
            let up2 = loss_of(&q, &batch, &labels, kind, mode, drop_seed);
            set(&mut q, orig - EPS / 2.0);
            let down2 = loss_of(&q, &batch, &labels, kind, mode, drop_seed);
            set(&mut q, orig);
            let fine = (up2 - down2) / EPS;
            let numeric = (4.0 * fine - coarse) / 3.0;
            let analytic = grads[ti][e];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            assert!(err < 1e-4, "{name}[{e}]: analytic {analytic} numeric {numeric}");
            worst = worst.max(err);
            checked += 1;
        }
    }
    (worst, checked)
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5u64 {
        let p: ModelParams<f64> = init_params(&tiny(12, 0.0, 0.3), 100 + seed).unwrap();
        for kind in [LossKind::Cls, LossKind::Mlm] {
            let (worst, n) = check_gradients(&p, kind, seed, 0);
            assert_eq!(n, p.num_parameters());
            assert!(worst < 1e-4, "seed {seed} {kind:?}: {worst}");
        }
    }
}

#[test]
fn gradients_match_finite_differences_with_fixed_dropout_masks() {
    let p: ModelParams<f64> = init_params(&tiny(12, 0.2, 0.3), 7).unwrap();
    for kind in [LossKind::Cls, LossKind::Mlm] {
        check_gradients(&p, kind, 9, 1234);
    }
}

#[test]
fn full_batch_descent_reduces_loss_on_separable_toy() {
    // Phish records contain token 6, benign records token 7.
    let cfg = ModelConfig {
        hidden_dropout_prob: 0.0,
        attention_probs_dropout_prob: 0.0,
        ..tiny(12, 0.0, 0.2)
    };
    let mut p: ModelParams<f32> = init_params(&cfg, 3).unwrap();
    let mut r = rng::rng(5);
    let mut batch = Vec::new();
    let mut labels = Vec::new();
    for i in 0..16 {
        let phish = i % 2 == 0;
        let mut content: Vec<u32> = (0..3).map(|_| r.random_range(8..12)).collect();
        content.insert(r.random_range(0..=3), if phish { 6 } else { 7 });
        batch.push(seq(&content, 8));
        labels.push(if phish { Label::Phish } else { Label::Benign });
    }
    let mut losses = Vec::new();
    for step in 0..50 {
        let g = backward(&p, &batch, Some(&labels), LossKind::Cls, step).unwrap();
        losses.push(g.loss);
        for ((_, mut w), (_, d)) in p.tensors_mut().into_iter().zip(g.grads.tensors()) {
            w.zip_mut_with(&d, |w, &d| *w -= 0.5 * d);
        }
    }
    assert!(losses[49] < losses[0] * 0.5, "{} -> {}", losses[0], losses[49]);
}

