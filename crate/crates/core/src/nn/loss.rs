use crate::error::{Error, Result};
use crate::nn::Real;

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy `-log softmax(logits)[label]` and its gradient with
/// respect to the logits (`softmax - one_hot`).
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    let n = logits.len();
    if n < 2 {
        return Err(Error::Config(format!("cross-entropy needs at least 2 classes, got {n}")));
    }
    if label >= n {
        return Err(Error::Label { label, classes: n });
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= T::one();
    Ok((loss, grad))
}
