//! Loss, embedding penalty, Adam and the epoch loop.

mod adam;
mod fit;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use fit::{fit, training_log_csv, validation_auc, EpochLog, FitResult, TrainConfig};

use crate::error::{Error, Result};
use crate::ndcore::PROB_CLAMP;

/// Weighted sum over tasks of the binary cross-entropy of one sample.
pub fn bce_loss(preds: &[f64], labels: &[u8], weights: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() || preds.len() != weights.len() {
        return Err(Error::shape(
            "bce_loss",
            format!("{} predictions", preds.len()),
            format!("{} labels / {} weights", labels.len(), weights.len()),
        ));
    }
    let mut total = 0.0;
    for ((&p, &y), &w) in preds.iter().zip(labels).zip(weights) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::numeric("bce_loss", format!("prediction {p} outside [0, 1]")));
        }
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total += w * if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
    }
    Ok(total)
}

/// `λ · Σ‖row‖²` over the given rows.
pub fn l2_embedding_penalty(rows: &[&[f64]], lambda: f64) -> f64 {
    lambda * rows.iter().flat_map(|r| r.iter()).map(|x| x * x).sum::<f64>()
}
