use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};
use crate::tokenize::{TokenSequence, CLS_ID, MASK_ID, PAD_ID, SEP_ID};
use crate::{Error, Result};

/// Smallest id a random replacement may take: everything below is a special.
const FIRST_ORDINARY_ID: u32 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingPolicy {
    pub select_prob: f64,
    pub replace_mask_frac: f64,
    pub keep_frac: f64,
    pub random_frac: f64,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self {
            select_prob: 0.15,
            replace_mask_frac: 0.8,
            keep_frac: 0.1,
            random_frac: 0.1,
        }
    }
}

impl MaskingPolicy {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.select_prob, self.replace_mask_frac, self.keep_frac, self.random_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("masking probabilities must lie in [0, 1]"));
        }
        let sum = self.replace_mask_frac + self.keep_frac + self.random_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mask/keep/random fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

fn eligible(id: u32, attended: u8) -> bool {
    attended == 1 && ![PAD_ID, CLS_ID, SEP_ID, MASK_ID].contains(&id)
}

/// Selects positions for the MLM objective and corrupts them. Each selected
/// position independently becomes `[MASK]`, stays, or becomes a random
/// ordinary id. Labels hold the original id at selected positions.
pub fn mask_tokens(seq: &TokenSequence, policy: &MaskingPolicy, vocab_size: usize, seed: u64) -> Result<TokenSequence> {
    policy.validate()?;
    if vocab_size <= FIRST_ORDINARY_ID as usize {
        return Err(Error::invalid(format!("vocabulary of {vocab_size} has no ordinary ids")));
    }
    let mut r = rng::rng_for(seed, &[stream::MASK]);
    let mut ids = seq.ids.clone();
    let mut labels = vec![None; ids.len()];
    for (t, (id, &m)) in ids.iter_mut().zip(&seq.attention_mask).enumerate() {
        if !eligible(*id, m) || !r.random_bool(policy.select_prob) {
            continue;
        }
        labels[t] = Some(*id);
        let u: f64 = r.random();
        if u < policy.replace_mask_frac {
            *id = MASK_ID;
        } else if u >= policy.replace_mask_frac + policy.keep_frac {
            *id = r.random_range(FIRST_ORDINARY_ID..vocab_size as u32);
        }
    }
    Ok(TokenSequence {
        ids,
        attention_mask: seq.attention_mask.clone(),
        mlm_labels: Some(labels),
    })
}
