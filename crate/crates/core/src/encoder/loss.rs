use ndarray::Axis;

use super::model::{softmax_xent, BatchOutput};
use super::params::Float;
use crate::corpus::Label;
use crate::{Error, Result};

/// Mean MLM cross-entropy, with a flag for batches that had nothing to predict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmLoss {
    pub loss: f64,
    pub empty_mask: bool,
}

/// Mean cross-entropy of the softmax over `pooled_logits` against `labels`.
pub fn classification_loss<T: Float>(out: &BatchOutput<T>, labels: &[Label]) -> Result<f64> {
    let b = out.pooled_logits.nrows();
    if labels.len() != b {
        return Err(Error::invalid(format!("{} labels for {b} records", labels.len())));
    }
    let total: f64 = out
        .pooled_logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, l)| softmax_xent(&row.to_vec(), l.as_index(), 1.0, None))
        .sum();
    Ok(total / b as f64)
}

/// Mean cross-entropy over labelled positions. `labels[b][t]` is `None` where
/// the position is ignored.
pub fn mlm_loss<T: Float>(out: &BatchOutput<T>, labels: &[Vec<Option<u32>>]) -> Result<MlmLoss> {
    let (b, l, v) = out.mlm_logits.dim();
    if labels.len() != b || labels.iter().any(|r| r.len() != l) {
        return Err(Error::invalid(format!("mlm labels do not match logits [{b}, {l}, {v}]")));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (bi, row) in labels.iter().enumerate() {
        for (t, lab) in row.iter().enumerate() {
            if let Some(id) = *lab {
                if id as usize >= v {
                    return Err(Error::invalid(format!("mlm label {id} outside vocabulary of {v}")));
                }
                let logits = out.mlm_logits.slice(ndarray::s![bi, t, ..]).to_vec();
                total += softmax_xent(&logits, id as usize, 1.0, None);
                count += 1;
            }
        }
    }
    if count == 0 {
        log::warn!("mlm loss over a batch with no labelled positions");
        return Ok(MlmLoss {
            loss: 0.0,
            empty_mask: true,
        });
    }
    Ok(MlmLoss {
        loss: total / count as f64,
        empty_mask: false,
    })
}
