use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, LinalgScalar, ScalarOperand};
use num_traits::FromPrimitive;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::rng::{self, stream};
use crate::{Error, Result};

/// Scalar type the encoder is generic over. Training runs in `f32`; the
/// gradient oracle runs in `f64`.
pub trait Float:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Affine map `y = W x + b` with `weight` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Float> Dense<T> {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
}

impl<T: Float> LayerNorm<T> {
    fn identity(n: usize) -> Self {
        Self {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer<T> {
    pub query: Dense<T>,
    pub key: Dense<T>,
    pub value: Dense<T>,
    pub attn_out: Dense<T>,
    pub attn_norm: LayerNorm<T>,
    pub ffn_in: Dense<T>,
    pub ffn_out: Dense<T>,
    pub ffn_norm: LayerNorm<T>,
}

/// Every trainable tensor of the encoder plus its config. The same struct
/// doubles as the gradient container and the optimizer moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// `[vocab_size, hidden]`
    pub token_embedding: Array2<T>,
    /// `[max_positions, hidden]`
    pub position_embedding: Array2<T>,
    /// `[type_vocab_size, hidden]` when segment embeddings are enabled.
    pub token_type_embedding: Option<Array2<T>>,
    pub embedding_norm: LayerNorm<T>,
    pub layers: Vec<EncoderLayer<T>>,
    pub pooler: Option<Dense<T>>,
    /// `[2, hidden]` two-class head over the pooled state.
    pub classifier: Dense<T>,
    /// `[vocab_size, hidden]` masked-token head over every position.
    pub mlm_head: Dense<T>,
}

macro_rules! tensor_list {
    ($self:ident, $view:ident, $as_opt:ident, $iter:ident) => {{
        let mut out = Vec::new();
        out.push(("embeddings.token".to_string(), $self.token_embedding.$view().into_dyn()));
        out.push(("embeddings.position".to_string(), $self.position_embedding.$view().into_dyn()));
        if let Some(t) = $self.token_type_embedding.$as_opt() {
            out.push(("embeddings.token_type".to_string(), t.$view().into_dyn()));
        }
        out.push(("embeddings.norm.gamma".to_string(), $self.embedding_norm.gamma.$view().into_dyn()));
        out.push(("embeddings.norm.beta".to_string(), $self.embedding_norm.beta.$view().into_dyn()));
        for (i, l) in $self.layers.$iter().enumerate() {
            let p = format!("layers.{i}");
            out.push((format!("{p}.attention.query.weight"), l.query.weight.$view().into_dyn()));
            out.push((format!("{p}.attention.query.bias"), l.query.bias.$view().into_dyn()));
            out.push((format!("{p}.attention.key.weight"), l.key.weight.$view().into_dyn()));
            out.push((format!("{p}.attention.key.bias"), l.key.bias.$view().into_dyn()));
            out.push((format!("{p}.attention.value.weight"), l.value.weight.$view().into_dyn()));
            out.push((format!("{p}.attention.value.bias"), l.value.bias.$view().into_dyn()));
            out.push((format!("{p}.attention.output.weight"), l.attn_out.weight.$view().into_dyn()));
            out.push((format!("{p}.attention.output.bias"), l.attn_out.bias.$view().into_dyn()));
            out.push((format!("{p}.attention.norm.gamma"), l.attn_norm.gamma.$view().into_dyn()));
            out.push((format!("{p}.attention.norm.beta"), l.attn_norm.beta.$view().into_dyn()));
            out.push((format!("{p}.ffn.in.weight"), l.ffn_in.weight.$view().into_dyn()));
            out.push((format!("{p}.ffn.in.bias"), l.ffn_in.bias.$view().into_dyn()));
            out.push((format!("{p}.ffn.out.weight"), l.ffn_out.weight.$view().into_dyn()));
            out.push((format!("{p}.ffn.out.bias"), l.ffn_out.bias.$view().into_dyn()));
            out.push((format!("{p}.ffn.norm.gamma"), l.ffn_norm.gamma.$view().into_dyn()));
            out.push((format!("{p}.ffn.norm.beta"), l.ffn_norm.beta.$view().into_dyn()));
        }
        if let Some(d) = $self.pooler.$as_opt() {
            out.push(("pooler.weight".to_string(), d.weight.$view().into_dyn()));
            out.push(("pooler.bias".to_string(), d.bias.$view().into_dyn()));
        }
        out.push(("classifier.weight".to_string(), $self.classifier.weight.$view().into_dyn()));
        out.push(("classifier.bias".to_string(), $self.classifier.bias.$view().into_dyn()));
        out.push(("mlm_head.weight".to_string(), $self.mlm_head.weight.$view().into_dyn()));
        out.push(("mlm_head.bias".to_string(), $self.mlm_head.bias.$view().into_dyn()));
        out
    }};
}

/// True for weight matrices and embeddings: drawn at init and decayed by the
/// optimizer. Biases and layer-norm tensors are neither.
pub fn is_weight(name: &str) -> bool {
    name.ends_with(".weight") || name.starts_with("embeddings.") && !name.contains(".norm.")
}

impl<T: Float> ModelParams<T> {
    /// Zero weights and biases with identity layer norms, shaped per `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden_size;
        let layer = || EncoderLayer {
            query: Dense::zeros(h, h),
            key: Dense::zeros(h, h),
            value: Dense::zeros(h, h),
            attn_out: Dense::zeros(h, h),
            attn_norm: LayerNorm::identity(h),
            ffn_in: Dense::zeros(cfg.intermediate_size, h),
            ffn_out: Dense::zeros(h, cfg.intermediate_size),
            ffn_norm: LayerNorm::identity(h),
        };
        Self {
            config: cfg.clone(),
            token_embedding: Array2::zeros((cfg.vocab_size, h)),
            position_embedding: Array2::zeros((cfg.max_position_embeddings, h)),
            token_type_embedding: (cfg.type_vocab_size > 0).then(|| Array2::zeros((cfg.type_vocab_size, h))),
            embedding_norm: LayerNorm::identity(h),
            layers: (0..cfg.num_hidden_layers).map(|_| layer()).collect(),
            pooler: cfg.use_pooler.then(|| Dense::zeros(h, h)),
            classifier: Dense::zeros(2, h),
            mlm_head: Dense::zeros(cfg.vocab_size, h),
        }
    }

    /// Same shapes, every element zero. Used for gradients and moments.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(T::zero());
        z
    }

    pub fn fill(&mut self, v: T) {
        for (_, mut t) in self.tensors_mut() {
            t.fill(v);
        }
    }

    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        tensor_list!(self, view, as_ref, iter)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        tensor_list!(self, view_mut, as_mut, iter_mut)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Converts every tensor to another scalar type.
    pub fn cast<U: Float>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.config);
        for ((_, src), (_, mut dst)) in self.tensors().into_iter().zip(out.tensors_mut()) {
            dst.zip_mut_with(&src, |d, &s| *d = U::of(s.as_f64()));
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }

    /// Sum of squares over all tensors.
    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum()
    }
}

/// Draws weights from `N(0, initializer_range^2)`; biases and layer-norm
/// offsets are 0 and layer-norm scales are 1.
pub fn init_params<T: Float>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut p = ModelParams::<T>::zeros(cfg);
    let normal = Normal::new(0.0, cfg.initializer_range)
        .map_err(|e| Error::invalid(format!("initializer_range: {e}")))?;
    let mut rng = rng::rng_for(seed, &[stream::INIT]);
    for (name, mut t) in p.tensors_mut() {
        if is_weight(&name) {
            t.map_inplace(|v| *v = T::of(normal.sample(&mut rng)));
        }
    }
    Ok(p)
}
