use super::Tensor4;
use crate::error::{Error, Result};

/// Row-wise softmax of `(batch, classes, 1, 1)` logits, flattened.
pub fn softmax_rows(logits: &Tensor4) -> Vec<f64> {
    let k = logits.sample_len();
    let mut out = Vec::with_capacity(logits.data().len());
    for n in 0..logits.batch() {
        let row = logits.sample(n);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / sum));
        debug_assert_eq!(out.len(), (n + 1) * k);
    }
    out
}

/// Mean cross-entropy of softmax(logits) against integer labels, and the
/// gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor4, labels: &[usize]) -> Result<(f64, Tensor4)> {
    let n = logits.batch();
    let k = logits.sample_len();
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes: k,
        });
    }
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[i * k + y].max(f64::MIN_POSITIVE).ln();
        grad[i * k + y] -= 1.0;
    }
    grad.iter_mut().for_each(|g| *g /= n as f64);
    Ok((loss / n as f64, Tensor4::from_vec(logits.dims(), grad)?))
}
