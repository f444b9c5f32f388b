//! Loss functions. Scalars come back as `f64` (metric plane); gradients stay
//! in the weight scalar type.

use crate::{Error, Result, Scalar};

/// Probability floor inside the log so empty probabilities cannot produce
/// infinities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean cross-entropy of `probs` (`[n,k]`, rows summing to one within 1e-6)
/// against integer labels. The returned gradient is taken w.r.t. the
/// pre-softmax logits, `(probs - onehot) / n`, which is exact when `probs`
/// came from a softmax.
pub fn cross_entropy<T: Scalar>(
    probs: &[T],
    n: usize,
    k: usize,
    labels: &[u8],
) -> Result<(f64, Vec<T>)> {
    if probs.len() != n * k || labels.len() != n || n == 0 {
        return Err(Error::ShapeMismatch {
            context: "cross entropy",
            expected: vec![n, k],
            got: vec![probs.len(), labels.len()],
        });
    }
    for b in 0..n {
        let row = &probs[b * k..(b + 1) * k];
        let sum: f64 = row.iter().map(|p| p.into64()).sum();
        if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput {
                context: "cross entropy",
                detail: format!("probability row {b} sums to {sum}, expected 1"),
            });
        }
        if labels[b] as usize >= k {
            return Err(Error::InvalidInput {
                context: "cross entropy",
                detail: format!("label {} out of range for {k} classes", labels[b]),
            });
        }
    }
    let mut loss = 0.0f64;
    for (b, &label) in labels.iter().enumerate() {
        let p = probs[b * k + label as usize].into64().max(PROB_FLOOR);
        loss -= p.ln();
    }
    loss /= n as f64;
    let inv_n = T::from64(1.0 / n as f64);
    let mut grad: Vec<T> = probs.to_vec();
    for (b, &label) in labels.iter().enumerate() {
        grad[b * k + label as usize] -= T::one();
    }
    for g in grad.iter_mut() {
        *g *= inv_n;
    }
    Ok((loss, grad))
}

/// Mean squared error over all elements and its gradient
/// `2 (pred - target) / len`.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "mean squared error",
            expected: vec![target.len()],
            got: vec![pred.len()],
        });
    }
    let mut loss = 0.0f64;
    for (&p, &t) in pred.iter().zip(target) {
        let d = p.into64() - t.into64();
        loss += d * d;
    }
    loss /= pred.len() as f64;
    let scale = T::from64(2.0 / pred.len() as f64);
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (p - t) * scale)
        .collect();
    Ok((loss, grad))
}
