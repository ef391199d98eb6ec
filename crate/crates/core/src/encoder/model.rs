use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Zip};

use super::params::{Dense, Float, LayerNorm, ModelParams};
use crate::corpus::Label;
use crate::rng::{derive, mix64, stream};
use crate::tokenize::TokenSequence;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mlm,
    Cls,
}

#[derive(Clone, Debug)]
pub struct BatchOutput<T> {
    /// `[batch, 2]`
    pub pooled_logits: Array2<T>,
    /// `[batch, len, vocab]`
    pub mlm_logits: Array3<T>,
}

/// Loss value and the gradient of that loss with respect to every tensor.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub loss: f64,
    pub grads: ModelParams<T>,
    /// Set when an MLM batch had no labelled position; loss and grads are then 0.
    pub empty_mask: bool,
}

// Dropout sites.
const SITE_EMB: u64 = 1;
const SITE_PROBS: u64 = 2;
const SITE_ATTN: u64 = 3;
const SITE_FFN: u64 = 4;
const SITE_POOLED: u64 = 5;

#[derive(Clone, Copy)]
struct Dims {
    b: usize,
    l: usize,
    heads: usize,
    dh: usize,
}

impl Dims {
    fn n(&self) -> usize {
        self.b * self.l
    }
}

struct Dropout {
    seed: u64,
    p: f64,
    p_attn: f64,
}

impl Dropout {
    /// Scale factors (`0` or `1/(1-p)`) for a `[batch*len, cols]` activation. Each
    /// element is a pure function of `(seed, site, layer, record, position, col)`.
    fn rows<T: Float>(&self, site: u64, layer: u64, d: Dims, cols: usize) -> Option<Array2<T>> {
        if self.p <= 0.0 {
            return None;
        }
        let mut m = Array2::zeros((d.n(), cols));
        for (r, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
            let rs = derive(self.seed, &[stream::DROPOUT, site, layer, (r / d.l) as u64, (r % d.l) as u64]);
            fill_mask(&mut row, rs, self.p);
        }
        Some(m)
    }

    fn probs<T: Float>(&self, layer: u64, b: usize, head: usize, l: usize) -> Option<Array2<T>> {
        if self.p_attn <= 0.0 {
            return None;
        }
        let mut m = Array2::zeros((l, l));
        for (t, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
            let rs = derive(self.seed, &[stream::DROPOUT, SITE_PROBS, layer, b as u64, head as u64, t as u64]);
            fill_mask(&mut row, rs, self.p_attn);
        }
        Some(m)
    }

    fn pooled<T: Float>(&self, b: usize, cols: usize) -> Option<Array2<T>> {
        if self.p <= 0.0 {
            return None;
        }
        let mut m = Array2::zeros((b, cols));
        for (r, mut row) in m.axis_iter_mut(Axis(0)).enumerate() {
            let rs = derive(self.seed, &[stream::DROPOUT, SITE_POOLED, r as u64]);
            fill_mask(&mut row, rs, self.p);
        }
        Some(m)
    }
}

fn fill_mask<T: Float>(row: &mut ndarray::ArrayViewMut1<T>, rs: u64, p: f64) {
    let keep = T::of(1.0 / (1.0 - p));
    for (c, v) in row.iter_mut().enumerate() {
        let u = (mix64(rs ^ c as u64) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        *v = if u < p { T::zero() } else { keep };
    }
}

fn apply_mask<T: Float>(x: &mut Array2<T>, m: &Option<Array2<T>>) {
    if let Some(m) = m {
        *x *= m;
    }
}

fn dense_fwd<T: Float>(d: &Dense<T>, x: &ArrayView2<T>) -> Array2<T> {
    let mut y = x.dot(&d.weight.t());
    y += &d.bias;
    y
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
fn dense_bwd<T: Float>(d: &Dense<T>, g: &mut Dense<T>, x: &ArrayView2<T>, dy: &ArrayView2<T>) -> Array2<T> {
    general_mat_mul(T::one(), &dy.t(), x, T::one(), &mut g.weight);
    g.bias += &dy.sum_axis(Axis(0));
    dy.dot(&d.weight)
}

struct LnCache<T> {
    xhat: Array2<T>,
    rstd: Array1<T>,
}

fn ln_fwd<T: Float>(ln: &LayerNorm<T>, x: &Array2<T>, eps: T) -> (Array2<T>, LnCache<T>) {
    let h = T::of(x.ncols() as f64);
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.axis_iter_mut(Axis(0)).zip(rstd.iter_mut()) {
        let mean = row.sum() / h;
        row -= mean;
        let var = row.iter().fold(T::zero(), |a, &v| a + v * v) / h;
        *r = T::one() / (var + eps).sqrt();
        row *= *r;
    }
    let y = &xhat * &ln.gamma + &ln.beta;
    (y, LnCache { xhat, rstd })
}

fn ln_bwd<T: Float>(ln: &LayerNorm<T>, g: &mut LayerNorm<T>, c: &LnCache<T>, dy: &Array2<T>) -> Array2<T> {
    g.gamma += &(dy * &c.xhat).sum_axis(Axis(0));
    g.beta += &dy.sum_axis(Axis(0));
    let h = T::of(dy.ncols() as f64);
    let mut dx = dy * &ln.gamma;
    for ((mut row, xh), &r) in dx.axis_iter_mut(Axis(0)).zip(c.xhat.axis_iter(Axis(0))).zip(c.rstd.iter()) {
        let m1 = row.sum() / h;
        let m2 = row.iter().zip(xh.iter()).fold(T::zero(), |a, (&d, &x)| a + d * x) / h;
        Zip::from(&mut row).and(&xh).for_each(|d, &x| *d = r * (*d - m1 - x * m2));
    }
    dx
}

fn gelu<T: Float>(x: T) -> T {
    let x = x.as_f64();
    T::of(0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)))
}

fn gelu_grad<T: Float>(x: T) -> T {
    let x = x.as_f64();
    T::of(0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) + x * (-0.5 * x * x).exp() / (2.0 * PI).sqrt())
}

struct LayerCache<T> {
    input: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Softmax output per `(record, head)`, before dropout.
    probs: Vec<Array2<T>>,
    prob_drop: Vec<Option<Array2<T>>>,
    ctx: Array2<T>,
    attn_drop: Option<Array2<T>>,
    ln1: LnCache<T>,
    h1: Array2<T>,
    pre_act: Array2<T>,
    act: Array2<T>,
    ffn_drop: Option<Array2<T>>,
    ln2: LnCache<T>,
}

struct Trace<T> {
    dims: Dims,
    emb_ln: LnCache<T>,
    emb_drop: Option<Array2<T>>,
    layers: Vec<LayerCache<T>>,
    /// Final hidden states `[batch*len, hidden]`.
    hidden: Array2<T>,
}

fn check_batch<T>(p: &ModelParams<T>, batch: &[TokenSequence]) -> Result<Dims> {
    let cfg = &p.config;
    let first = batch.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let l = first.len();
    if l == 0 || l > cfg.max_position_embeddings {
        return Err(Error::invalid(format!(
            "sequence length {l} outside 1..={}",
            cfg.max_position_embeddings
        )));
    }
    for (i, s) in batch.iter().enumerate() {
        if s.len() != l || s.attention_mask.len() != l {
            return Err(Error::invalid(format!("record {i}: length {} != {l}", s.len())));
        }
        if let Some(&id) = s.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::invalid(format!("record {i}: id {id} outside vocabulary of {}", cfg.vocab_size)));
        }
    }
    Ok(Dims {
        b: batch.len(),
        l,
        heads: cfg.num_attention_heads,
        dh: cfg.head_size(),
    })
}

fn encode<T: Float>(p: &ModelParams<T>, batch: &[TokenSequence], drop: Option<&Dropout>) -> Result<Trace<T>> {
    let d = check_batch(p, batch)?;
    let hsz = p.config.hidden_size;
    let eps = T::of(p.config.layer_norm_eps);
    let mut x = Array2::zeros((d.n(), hsz));
    for (bi, s) in batch.iter().enumerate() {
        for (t, &id) in s.ids.iter().enumerate() {
            let mut row = x.row_mut(bi * d.l + t);
            row += &p.token_embedding.row(id as usize);
            row += &p.position_embedding.row(t);
            if let Some(tt) = &p.token_type_embedding {
                row += &tt.row(0);
            }
        }
    }
    let (mut x, emb_ln) = ln_fwd(&p.embedding_norm, &x, eps);
    let emb_drop = drop.and_then(|dr| dr.rows(SITE_EMB, 0, d, hsz));
    apply_mask(&mut x, &emb_drop);

    let scale = T::of(1.0 / (d.dh as f64).sqrt());
    let mut layers = Vec::with_capacity(p.layers.len());
    for (li, lp) in p.layers.iter().enumerate() {
        let q = dense_fwd(&lp.query, &x.view());
        let k = dense_fwd(&lp.key, &x.view());
        let v = dense_fwd(&lp.value, &x.view());
        let mut ctx = Array2::zeros((d.n(), hsz));
        let mut probs = Vec::with_capacity(d.b * d.heads);
        let mut prob_drop = Vec::with_capacity(d.b * d.heads);
        for (bi, s) in batch.iter().enumerate() {
            let rows = bi * d.l..(bi + 1) * d.l;
            for hd in 0..d.heads {
                let cols = hd * d.dh..(hd + 1) * d.dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut pr = qh.dot(&kh.t());
                for mut row in pr.axis_iter_mut(Axis(0)) {
                    masked_softmax(&mut row, &s.attention_mask, scale);
                }
                let pd = drop.and_then(|dr| dr.probs(li as u64, bi, hd, d.l));
                let mut out = ctx.slice_mut(s![rows.clone(), cols]);
                match &pd {
                    Some(m) => general_mat_mul(T::one(), &(&pr * m), &vh, T::zero(), &mut out),
                    None => general_mat_mul(T::one(), &pr, &vh, T::zero(), &mut out),
                }
                probs.push(pr);
                prob_drop.push(pd);
            }
        }
        let mut a = dense_fwd(&lp.attn_out, &ctx.view());
        let attn_drop = drop.and_then(|dr| dr.rows(SITE_ATTN, li as u64, d, hsz));
        apply_mask(&mut a, &attn_drop);
        a += &x;
        let (h1, ln1) = ln_fwd(&lp.attn_norm, &a, eps);
        let pre_act = dense_fwd(&lp.ffn_in, &h1.view());
        let act = pre_act.mapv(gelu);
        let mut f = dense_fwd(&lp.ffn_out, &act.view());
        let ffn_drop = drop.and_then(|dr| dr.rows(SITE_FFN, li as u64, d, hsz));
        apply_mask(&mut f, &ffn_drop);
        f += &h1;
        let (h2, ln2) = ln_fwd(&lp.ffn_norm, &f, eps);
        layers.push(LayerCache {
            input: std::mem::replace(&mut x, h2),
            q,
            k,
            v,
            probs,
            prob_drop,
            ctx,
            attn_drop,
            ln1,
            h1,
            pre_act,
            act,
            ffn_drop,
            ln2,
        });
    }
    Ok(Trace {
        dims: d,
        emb_ln,
        emb_drop,
        layers,
        hidden: x,
    })
}

/// Scaled softmax over the attended keys of one query row; masked keys get weight 0.
fn masked_softmax<T: Float>(row: &mut ndarray::ArrayViewMut1<T>, mask: &[u8], scale: T) {
    let mut max = T::neg_infinity();
    for (v, &m) in row.iter_mut().zip(mask) {
        *v *= scale;
        if m != 0 && *v > max {
            max = *v;
        }
    }
    if max == T::neg_infinity() {
        row.fill(T::zero());
        return;
    }
    let mut sum = T::zero();
    for (v, &m) in row.iter_mut().zip(mask) {
        *v = if m != 0 { (*v - max).exp() } else { T::zero() };
        sum += *v;
    }
    *row /= sum;
}

struct Pooled<T> {
    cls: Array2<T>,
    /// Pooler output after tanh (equal to `cls` when the pooler is off).
    pooled: Array2<T>,
    drop: Option<Array2<T>>,
    logits: Array2<T>,
}

fn pool<T: Float>(p: &ModelParams<T>, tr: &Trace<T>, drop: Option<&Dropout>) -> Pooled<T> {
    let d = tr.dims;
    let cls = tr.hidden.slice(s![..;d.l, ..]).to_owned();
    let pooled = match &p.pooler {
        Some(pl) => dense_fwd(pl, &cls.view()).mapv(|v| v.tanh()),
        None => cls.clone(),
    };
    let drop = drop.and_then(|dr| dr.pooled(d.b, pooled.ncols()));
    let mut used = pooled.clone();
    apply_mask(&mut used, &drop);
    let logits = dense_fwd(&p.classifier, &used.view());
    Pooled {
        cls,
        pooled,
        drop,
        logits,
    }
}

fn dropout_for<T>(p: &ModelParams<T>, mode: Mode, seed: u64) -> Option<Dropout> {
    (mode == Mode::Train).then_some(Dropout {
        seed,
        p: p.config.hidden_dropout_prob,
        p_attn: p.config.attention_probs_dropout_prob,
    })
}

/// Full forward pass: classification logits for every record and MLM logits
/// for every position.
pub fn forward<T: Float>(p: &ModelParams<T>, batch: &[TokenSequence], mode: Mode, seed: u64) -> Result<BatchOutput<T>> {
    let drop = dropout_for(p, mode, seed);
    let tr = encode(p, batch, drop.as_ref())?;
    let pooled = pool(p, &tr, drop.as_ref());
    let d = tr.dims;
    let mlm = dense_fwd(&p.mlm_head, &tr.hidden.view());
    let v = p.config.vocab_size;
    let mlm_logits = mlm
        .into_shape_with_order((d.b, d.l, v))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(BatchOutput {
        pooled_logits: pooled.logits,
        mlm_logits,
    })
}

/// Eval-mode classification logits only, skipping the MLM head.
pub fn classify<T: Float>(p: &ModelParams<T>, batch: &[TokenSequence]) -> Result<Array2<T>> {
    let tr = encode(p, batch, None)?;
    Ok(pool(p, &tr, None).logits)
}

/// Eval-mode probability of the phish class for each record.
pub fn phish_scores<T: Float>(p: &ModelParams<T>, batch: &[TokenSequence]) -> Result<Vec<f64>> {
    let logits = classify(p, batch)?;
    Ok(logits
        .axis_iter(Axis(0))
        .map(|r| {
            let (a, b) = (r[0].as_f64(), r[1].as_f64());
            1.0 / (1.0 + (a - b).exp())
        })
        .collect())
}

/// Softmax cross-entropy of one logit row. Returns the loss and writes
/// `softmax - onehot` scaled by `w` into `grad`.
pub(crate) fn softmax_xent<T: Float>(logits: &[T], target: usize, w: f64, grad: Option<&mut [T]>) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let sum: f64 = logits.iter().map(|v| (v.as_f64() - max).exp()).sum();
    let lse = max + sum.ln();
    if let Some(g) = grad {
        for (i, (gi, v)) in g.iter_mut().zip(logits).enumerate() {
            let pr = (v.as_f64() - lse).exp();
            *gi = T::of(w * (pr - if i == target { 1.0 } else { 0.0 }));
        }
    }
    lse - logits[target].as_f64()
}

/// Train-mode loss and exact gradients. `labels` is required for
/// [`LossKind::Cls`]; MLM targets are read from each sequence's `mlm_labels`.
pub fn backward<T: Float>(
    p: &ModelParams<T>,
    batch: &[TokenSequence],
    labels: Option<&[Label]>,
    kind: LossKind,
    seed: u64,
) -> Result<Gradients<T>> {
    backward_mode(p, batch, labels, kind, Mode::Train, seed)
}

fn backward_mode<T: Float>(
    p: &ModelParams<T>,
    batch: &[TokenSequence],
    labels: Option<&[Label]>,
    kind: LossKind,
    mode: Mode,
    seed: u64,
) -> Result<Gradients<T>> {
    let drop = dropout_for(p, mode, seed);
    let tr = encode(p, batch, drop.as_ref())?;
    let d = tr.dims;
    let hsz = p.config.hidden_size;
    let mut g = p.zeros_like();
    let mut dhidden = Array2::<T>::zeros((d.n(), hsz));
    let loss;
    match kind {
        LossKind::Cls => {
            let labels = labels.ok_or_else(|| Error::invalid("classification loss needs labels"))?;
            if labels.len() != d.b {
                return Err(Error::invalid(format!("{} labels for {} records", labels.len(), d.b)));
            }
            let pd = pool(p, &tr, drop.as_ref());
            let w = 1.0 / d.b as f64;
            let mut dlogits = Array2::<T>::zeros((d.b, 2));
            let mut total = 0.0;
            for (i, lab) in labels.iter().enumerate() {
                let row = pd.logits.row(i).to_vec();
                total += softmax_xent(&row, lab.as_index(), w, dlogits.row_mut(i).as_slice_mut());
            }
            loss = total * w;
            let mut used = pd.pooled.clone();
            apply_mask(&mut used, &pd.drop);
            let mut dpooled = dense_bwd(&p.classifier, &mut g.classifier, &used.view(), &dlogits.view());
            apply_mask(&mut dpooled, &pd.drop);
            let dcls = match (&p.pooler, &mut g.pooler) {
                (Some(pl), Some(gpl)) => {
                    Zip::from(&mut dpooled).and(&pd.pooled).for_each(|dv, &y| *dv *= T::one() - y * y );
                    dense_bwd(pl, gpl, &pd.cls.view(), &dpooled.view())
                }
                _ => dpooled,
            };
            for (bi, row) in dcls.axis_iter(Axis(0)).enumerate() {
                dhidden.row_mut(bi * d.l).assign(&row);
            }
        }
        LossKind::Mlm => {
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for (bi, s) in batch.iter().enumerate() {
                if let Some(ls) = &s.mlm_labels {
                    for (t, lab) in ls.iter().enumerate() {
                        if let Some(id) = lab {
                            rows.push(bi * d.l + t);
                            targets.push(*id as usize);
                        }
                    }
                }
            }
            if rows.is_empty() {
                return Ok(Gradients {
                    loss: 0.0,
                    grads: g,
                    empty_mask: true,
                });
            }
            if let Some(&bad) = targets.iter().find(|&&t| t >= p.config.vocab_size) {
                return Err(Error::invalid(format!("mlm label {bad} outside vocabulary")));
            }
            let sel = tr.hidden.select(Axis(0), &rows);
            let logits = dense_fwd(&p.mlm_head, &sel.view());
            let w = 1.0 / rows.len() as f64;
            let mut dlogits = Array2::<T>::zeros(logits.raw_dim());
            let mut total = 0.0;
            for (i, &t) in targets.iter().enumerate() {
                let row = logits.row(i).to_vec();
                total += softmax_xent(&row, t, w, dlogits.row_mut(i).as_slice_mut());
            }
            loss = total * w;
            let dsel = dense_bwd(&p.mlm_head, &mut g.mlm_head, &sel.view(), &dlogits.view());
            for (&r, row) in rows.iter().zip(dsel.axis_iter(Axis(0))) {
                let mut dst = dhidden.row_mut(r);
                dst += &row;
            }
        }
    }
    let dx = backprop_layers(p, &mut g, &tr, batch, dhidden);
    backprop_embeddings(p, &mut g, &tr, batch, dx);
    Ok(Gradients {
        loss,
        grads: g,
        empty_mask: false,
    })
}

fn backprop_layers<T: Float>(
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    tr: &Trace<T>,
    batch: &[TokenSequence],
    mut dout: Array2<T>,
) -> Array2<T> {
    let d = tr.dims;
    let scale = T::of(1.0 / (d.dh as f64).sqrt());
    for li in (0..p.layers.len()).rev() {
        let lp = &p.layers[li];
        let gl = &mut g.layers[li];
        let c = &tr.layers[li];

        let dz2 = ln_bwd(&lp.ffn_norm, &mut gl.ffn_norm, &c.ln2, &dout);
        let mut df = dz2.clone();
        apply_mask(&mut df, &c.ffn_drop);
        let mut dact = dense_bwd(&lp.ffn_out, &mut gl.ffn_out, &c.act.view(), &df.view());
        Zip::from(&mut dact).and(&c.pre_act).for_each(|dv, &u| *dv *= gelu_grad(u));
        let mut dh1 = dense_bwd(&lp.ffn_in, &mut gl.ffn_in, &c.h1.view(), &dact.view());
        dh1 += &dz2;

        let dz1 = ln_bwd(&lp.attn_norm, &mut gl.attn_norm, &c.ln1, &dh1);
        let mut da = dz1.clone();
        apply_mask(&mut da, &c.attn_drop);
        let dctx = dense_bwd(&lp.attn_out, &mut gl.attn_out, &c.ctx.view(), &da.view());

        let mut dq = Array2::<T>::zeros(c.q.raw_dim());
        let mut dk = Array2::<T>::zeros(c.k.raw_dim());
        let mut dv = Array2::<T>::zeros(c.v.raw_dim());
        for bi in 0..batch.len() {
            let rows = bi * d.l..(bi + 1) * d.l;
            for hd in 0..d.heads {
                let idx = bi * d.heads + hd;
                let cols = hd * d.dh..(hd + 1) * d.dh;
                let pr = &c.probs[idx];
                let pm = &c.prob_drop[idx];
                let dctx_h = dctx.slice(s![rows.clone(), cols.clone()]);
                let qh = c.q.slice(s![rows.clone(), cols.clone()]);
                let kh = c.k.slice(s![rows.clone(), cols.clone()]);
                let vh = c.v.slice(s![rows.clone(), cols.clone()]);
                let used = match pm {
                    Some(m) => pr * m,
                    None => pr.clone(),
                };
                let mut dvh = dv.slice_mut(s![rows.clone(), cols.clone()]);
                general_mat_mul(T::one(), &used.t(), &dctx_h, T::zero(), &mut dvh);
                let mut dp = dctx_h.dot(&vh.t());
                if let Some(m) = pm {
                    dp *= m;
                }
                // dS = P * (dP - rowsum(P * dP)), then the 1/sqrt(dh) scale.
                for (mut drow, prow) in dp.axis_iter_mut(Axis(0)).zip(pr.axis_iter(Axis(0))) {
                    let dot = drow.iter().zip(prow.iter()).fold(T::zero(), |a, (&x, &y)| a + x * y);
                    Zip::from(&mut drow).and(&prow).for_each(|x, &y| *x = y * (*x - dot) * scale);
                }
                let mut dqh = dq.slice_mut(s![rows.clone(), cols.clone()]);
                general_mat_mul(T::one(), &dp, &kh, T::zero(), &mut dqh);
                let mut dkh = dk.slice_mut(s![rows.clone(), cols]);
                general_mat_mul(T::one(), &dp.t(), &qh, T::zero(), &mut dkh);
            }
        }
        let x = c.input.view();
        let mut dx = dz1;
        dx += &dense_bwd(&lp.query, &mut gl.query, &x, &dq.view());
        dx += &dense_bwd(&lp.key, &mut gl.key, &x, &dk.view());
        dx += &dense_bwd(&lp.value, &mut gl.value, &x, &dv.view());
        dout = dx;
    }
    dout
}

fn backprop_embeddings<T: Float>(
    p: &ModelParams<T>,
    g: &mut ModelParams<T>,
    tr: &Trace<T>,
    batch: &[TokenSequence],
    mut dx: Array2<T>,
) {
    let d = tr.dims;
    apply_mask(&mut dx, &tr.emb_drop);
    let de = ln_bwd(&p.embedding_norm, &mut g.embedding_norm, &tr.emb_ln, &dx);
    for (bi, s) in batch.iter().enumerate() {
        for (t, &id) in s.ids.iter().enumerate() {
            let row = de.row(bi * d.l + t);
            let mut tok = g.token_embedding.row_mut(id as usize);
            tok += &row;
            let mut pos = g.position_embedding.row_mut(t);
            pos += &row;
            if let Some(tt) = &mut g.token_type_embedding {
                let mut r0 = tt.row_mut(0);
                r0 += &row;
            }
        }
    }
}
