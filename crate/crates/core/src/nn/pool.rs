use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::{conv_output_dims, hwc};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolLayer {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: usize,
}

impl PoolLayer {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), padding: usize) -> Result<Self> {
        let layer = Self {
            kernel,
            stride,
            padding,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        if kh == 0 || kw == 0 || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::InvalidArchitecture(
                "pool kernel and stride extents must be at least 1".into(),
            ));
        }
        // Every window must hold at least one real pixel.
        if self.padding >= kh.min(kw) {
            return Err(Error::InvalidArchitecture(
                "pool padding must be smaller than the kernel".into(),
            ));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let [h, w, c] = hwc(input)?;
        let (oh, ow) = conv_output_dims(
            h,
            w,
            self.kernel.0,
            self.kernel.1,
            self.padding,
            self.stride.0,
            self.stride.1,
        )?;
        Ok([oh, ow, c])
    }
}

/// Max pooling. Returns the pooled map and, per output element, the flat input
/// index that won (first row-major occurrence on ties). Padding taps are skipped.
pub fn maxpool2d_with_argmax<T: Scalar>(
    input: &Tensor<T>,
    layer: &PoolLayer,
) -> Result<(Tensor<T>, Vec<usize>)> {
    layer.validate()?;
    let [h, w, c] = hwc(input.shape())?;
    let out = layer.output_shape(input.shape())?;
    let (kh, kw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let pad = layer.padding as isize;
    let x = input.data();
    let mut values = vec![T::zero(); out.iter().product()];
    let mut argmax = vec![0usize; values.len()];
    for i in 0..out[0] {
        for j in 0..out[1] {
            for k in 0..c {
                let mut best: Option<(T, usize)> = None;
                for u in 0..kh {
                    let ii = (i * sh + u) as isize - pad;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for v in 0..kw {
                        let jj = (j * sw + v) as isize - pad;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        let idx = (ii as usize * w + jj as usize) * c + k;
                        if best.is_none_or(|(b, _)| x[idx] > b) {
                            best = Some((x[idx], idx));
                        }
                    }
                }
                let (v, idx) = best.expect("window overlaps the input");
                let o = (i * out[1] + j) * c + k;
                values[o] = v;
                argmax[o] = idx;
            }
        }
    }
    Ok((Tensor::new(out.to_vec(), values)?, argmax))
}

pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, layer: &PoolLayer) -> Result<Tensor<T>> {
    maxpool2d_with_argmax(input, layer).map(|(t, _)| t)
}

pub(crate) fn maxpool_backward<T: Scalar>(
    grad: &[T],
    argmax: &[usize],
    input_shape: &[usize],
) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&g, &idx) in grad.iter().zip(argmax) {
        d[idx] += g;
    }
    dx
}

/// Per-channel mean over all spatial positions.
pub fn global_average_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [h, w, c] = hwc(input.shape())?;
    let mut sums = vec![T::zero(); c];
    for px in input.data().chunks_exact(c) {
        for (s, &v) in sums.iter_mut().zip(px) {
            *s += v;
        }
    }
    let n = T::from_f64((h * w) as f64);
    Ok(Tensor::from_vec(sums.into_iter().map(|s| s / n).collect()))
}

pub(crate) fn gap_backward<T: Scalar>(grad: &[T], input_shape: &[usize]) -> Tensor<T> {
    let [h, w, c] = hwc(input_shape).expect("validated rank");
    let n = T::from_f64((h * w) as f64);
    let mut dx = Tensor::zeros(input_shape);
    for px in dx.data_mut().chunks_exact_mut(c) {
        for (o, &g) in px.iter_mut().zip(grad) {
            *o = g / n;
        }
    }
    dx
}

/// Row-major, channel-innermost linearization. Since storage already uses that
/// order this only drops the spatial axes.
pub fn flatten<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(input.data().to_vec())
}
