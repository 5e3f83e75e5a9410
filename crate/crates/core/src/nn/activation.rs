use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    /// Only valid on a rank-1 output.
    Softmax,
    None,
}

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        x
    } else {
        T::zero()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    // Split on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Elementwise activation; `Softmax` normalizes over the whole tensor.
pub fn activate<T: Scalar>(t: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    let mut out = t.clone();
    activate_in_place(out.data_mut(), kind)?;
    Ok(out)
}

pub(crate) fn activate_in_place<T: Scalar>(xs: &mut [T], kind: Activation) -> Result<()> {
    match kind {
        Activation::Relu => xs.iter_mut().for_each(|x| *x = relu(*x)),
        Activation::Sigmoid => xs.iter_mut().for_each(|x| *x = sigmoid(*x)),
        Activation::Tanh => xs.iter_mut().for_each(|x| *x = x.tanh()),
        Activation::Softmax => softmax_in_place(xs)?,
        Activation::None => {}
    }
    Ok(())
}

pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let mut out = logits.clone();
    softmax_in_place(out.data_mut())?;
    Ok(out)
}

fn softmax_in_place<T: Scalar>(xs: &mut [T]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x = *x / sum;
    }
    Ok(())
}

/// Turns `grad` (w.r.t. the activation output) into the gradient w.r.t. the
/// pre-activation, given the pre-activation `pre` and output `out`.
pub(crate) fn backward_in_place<T: Scalar>(
    grad: &mut [T],
    pre: &[T],
    out: &[T],
    kind: Activation,
) {
    match kind {
        Activation::Relu => {
            for (g, &z) in grad.iter_mut().zip(pre) {
                if z <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for (g, &y) in grad.iter_mut().zip(out) {
                *g *= y * (T::one() - y);
            }
        }
        Activation::Tanh => {
            for (g, &y) in grad.iter_mut().zip(out) {
                *g *= T::one() - y * y;
            }
        }
        Activation::Softmax => {
            let dot: T = grad.iter().zip(out).map(|(&g, &y)| g * y).sum();
            for (g, &y) in grad.iter_mut().zip(out) {
                *g = y * (*g - dot);
            }
        }
        Activation::None => {}
    }
}
