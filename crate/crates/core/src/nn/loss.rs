use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::activation::sigmoid_scalar;

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before logs.
pub const PROB_CLIP: f64 = 1e-15;

/// Mean binary cross entropy (logloss) of probabilities against 0/1 labels.
pub fn bce_loss(p: &[f64], y: &[u8]) -> f64 {
    debug_assert_eq!(p.len(), y.len());
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / p.len() as f64
}

/// Logloss of `sigmoid(logits)` and its gradient `(p - y) / b` with respect
/// to the logits. `logits` is `[b, 1]`.
pub fn bce_with_logits<T: Scalar>(logits: &Tensor<T>, y: &[u8]) -> Result<(f64, Tensor<T>)> {
    let (b, w) = logits.dims2()?;
    if w != 1 || b != y.len() {
        return Err(Error::Shape(format!(
            "loss expects [{}, 1] logits, got {:?}",
            y.len(),
            logits.shape()
        )));
    }
    let p: Vec<f64> = logits.data().iter().map(|v| sigmoid_scalar(v.to_f64())).collect();
    let loss = bce_loss(&p, y);
    let grad = p.iter().zip(y).map(|(&p, &y)| T::of((p - y as f64) / b as f64)).collect();
    Ok((loss, Tensor::new(vec![b, 1], grad)?))
}
