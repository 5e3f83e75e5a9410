use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adamax,
}

/// First and second moments per parameter tensor. For Adamax the second
/// moment holds the exponentially weighted infinity norm.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { v: m.clone(), m, t: 0 }
    }
}

pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() || p.shape() != state.v[i].shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {i} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (tb1, tb2) = (T::from_f64(b1), T::from_f64(b2));
    let (ob1, ob2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
    let eps = T::from_f64(cfg.epsilon);
    let step = T::from_f64(cfg.learning_rate / c1);
    let inv_c2 = T::from_f64(1.0 / c2);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let it = p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut()));
        match cfg.optimizer {
            OptimizerKind::Adam => {
                for ((w, &gi), (mi, vi)) in it {
                    *mi = tb1 * *mi + ob1 * gi;
                    *vi = tb2 * *vi + ob2 * gi * gi;
                    *w -= step * *mi / ((*vi * inv_c2).sqrt() + eps);
                }
            }
            OptimizerKind::Adamax => {
                for ((w, &gi), (mi, ui)) in it {
                    *mi = tb1 * *mi + ob1 * gi;
                    *ui = (tb2 * *ui).max(gi.abs());
                    *w -= step * *mi / (*ui + eps);
                }
            }
        }
    }
    Ok(())
}
