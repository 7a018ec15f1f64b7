//! Softmax cross-entropy with optional L2 penalty, and the matching
//! analytic gradients.

use super::Tensor;

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the gold class and its gradient w.r.t. the logits
/// (`probs - onehot`).
pub fn softmax_xent(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let loss = -probs[gold].max(f64::MIN_POSITIVE).ln();
    let mut d_logits = probs;
    d_logits[gold] -= 1.0;
    (loss, d_logits)
}

/// `lambda * sum w^2` over the given weight tensors (biases excluded by
/// passing only weights).
pub fn l2_penalty<'a>(weights: impl IntoIterator<Item = &'a Tensor>, lambda: f64) -> f64 {
    lambda * weights.into_iter().map(Tensor::sum_squares).sum::<f64>()
}

/// Adds the L2 term's gradient `2 * lambda * w` onto a weight gradient.
pub fn add_l2_grads(weights: &Tensor, lambda: f64, d_weights: &mut Tensor) {
    for (g, w) in d_weights.data_mut().iter_mut().zip(weights.iter()) {
        *g += 2.0 * lambda * w;
    }
}

/// Full classification loss `xent + lambda * sum w^2` and the logit
/// gradient. Weight gradients of the L2 term are `2 * lambda * w`; see
/// [`add_l2_grads`].
pub fn softmax_xent_l2(
    logits: &[f64],
    gold: usize,
    weights: &[&Tensor],
    lambda: f64,
) -> (f64, Vec<f64>) {
    let (data_loss, d_logits) = softmax_xent(logits, gold);
    (data_loss + l2_penalty(weights.iter().copied(), lambda), d_logits)
}
