use serde::{Deserialize, Serialize};

use crate::encoder::{is_weight, Float, ModelParams};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay applied to weight matrices and embeddings only.
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
            weight_decay: 0.01,
            clip_norm: 1.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.weight_decay < 0.0 || self.clip_norm < 0.0 {
            return Err(Error::invalid("adam epsilon must be positive; decay and clip non-negative"));
        }
        Ok(())
    }
}

/// Adam moments plus the update counter.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
}

/// Scales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Float>(grads: &mut ModelParams<T>, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = T::of(max_norm / norm);
        for (_, mut t) in grads.tensors_mut() {
            t.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

impl<T: Float> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        })
    }

    /// One update at learning rate `lr`. Clips `grads` first and returns the
    /// pre-clip gradient norm.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &mut ModelParams<T>, lr: f64) -> Result<f64> {
        let norm = clip_gradients(grads, self.config.clip_norm);
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.step as i32));
        let eps = T::of(c.epsilon);
        let lr_t = T::of(lr);
        let decay = T::of(lr * c.weight_decay);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((name, mut p), (_, g)), (_, mut m)), (_, mut v)) in tensors {
            let decayed = is_weight(&name) && c.weight_decay > 0.0;
            ndarray::Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + one_b1 * g;
                    *v = b2 * *v + one_b2 * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    let shrink = if decayed { decay * *p } else { T::zero() };
                    *p = *p - lr_t * update - shrink;
                });
        }
        Ok(norm)
    }
}
