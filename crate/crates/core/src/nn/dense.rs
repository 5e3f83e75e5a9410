use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::{activate_in_place, Activation};
use crate::tensor::{Scalar, Tensor};

/// Fully connected layer `y = act(Wᵀx + b)` with `W` stored `[in_units, units]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T = f32> {
    pub units: usize,
    pub activation: Activation,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(in_units: usize, units: usize, activation: Activation) -> Result<Self> {
        if in_units == 0 || units == 0 {
            return Err(Error::InvalidArchitecture("dense extents must be positive".into()));
        }
        Ok(Self {
            units,
            activation,
            weights: Tensor::zeros(&[in_units, units]),
            bias: Tensor::zeros(&[units]),
        })
    }

    pub fn in_units(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ws = self.weights.shape();
        if ws.len() != 2 || ws[1] != self.units || self.bias.shape() != [self.units] {
            return Err(Error::InvalidArchitecture(format!(
                "dense weights {ws:?} / bias {:?} disagree with {} units",
                self.bias.shape(),
                self.units
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_pre(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_units() {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.in_units(),
                x.len()
            )));
        }
        let u = self.units;
        let w = self.weights.data();
        let mut z = self.bias.data().to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &wij) in z.iter_mut().zip(&w[i * u..][..u]) {
                *o += xi * wij;
            }
        }
        Ok(z)
    }

    pub(crate) fn backward(
        &self,
        x: &[T],
        dz: &[T],
        dw: &mut [T],
        db: &mut [T],
        want_input_grad: bool,
    ) -> Option<Vec<T>> {
        let u = self.units;
        for (acc, &g) in db.iter_mut().zip(dz) {
            *acc += g;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (acc, &g) in dw[i * u..][..u].iter_mut().zip(dz) {
                *acc += xi * g;
            }
        }
        want_input_grad.then(|| {
            let w = self.weights.data();
            (0..x.len())
                .map(|i| crate::tensor::dot(&w[i * u..][..u], dz))
                .collect()
        })
    }
}

pub fn dense_forward<T: Scalar>(input: &Tensor<T>, layer: &DenseLayer<T>) -> Result<Tensor<T>> {
    layer.validate()?;
    let mut z = layer.forward_pre(input.data())?;
    activate_in_place(&mut z, layer.activation)?;
    Ok(Tensor::from_vec(z))
}
