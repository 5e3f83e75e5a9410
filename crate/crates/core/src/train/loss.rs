use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CategoricalCe,
    BinaryCe,
}

/// Returns the loss and its gradient w.r.t. the softmax logits (`p - y`).
pub fn categorical_cross_entropy<T: Scalar>(
    probs: &Tensor<T>,
    onehot: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    if probs.len() != onehot.len() || probs.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} probabilities against {} targets",
            probs.len(),
            onehot.len()
        )));
    }
    let total: f64 = probs.data().iter().map(|p| Scalar::to_f64(*p)).sum();
    if !total.is_finite() || (total - 1.0).abs() > 1e-4 || probs.data().iter().any(|p| Scalar::to_f64(*p) < 0.0) {
        return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    let ones = onehot.data().iter().filter(|&&y| y == T::one()).count();
    let zeros = onehot.data().iter().filter(|&&y| y == T::zero()).count();
    if ones != 1 || ones + zeros != onehot.len() {
        return Err(Error::InvalidDistribution("target is not one-hot".into()));
    }
    let loss = probs
        .data()
        .iter()
        .zip(onehot.data())
        .filter(|(_, &y)| y == T::one())
        .map(|(p, _)| -Scalar::to_f64(*p).max(PROB_FLOOR).ln())
        .sum();
    let mut grad = probs.clone();
    grad.data_mut()
        .iter_mut()
        .zip(onehot.data())
        .for_each(|(g, &y)| *g -= y);
    Ok((loss, grad))
}

/// Returns the loss and its gradient w.r.t. the sigmoid logit (`p - y`).
pub fn binary_cross_entropy(p: f64, y: f64) -> (f64, f64) {
    let q = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    (-(y * q.ln() + (1.0 - y) * (1.0 - q).ln()), p - y)
}

/// Loss of one sample whose label is `label`, given the activated output.
pub(crate) fn sample_loss(output: &[f32], label: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::CategoricalCe => -(output[label] as f64).max(PROB_FLOOR).ln(),
        LossKind::BinaryCe => binary_cross_entropy(output[0] as f64, label as f64).0,
    }
}
