//! Valid/zero-padded 2-D cross-correlation via an explicit patch matrix.
//!
//! Weights are laid out `[f_h, f_w, in_channels, filters]`, which makes the
//! weight tensor a `(f_h * f_w * in_channels) x filters` row-major matrix whose
//! row order matches the patch rows produced by [`im2col`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::activation::{activate_in_place, Activation};
use crate::tensor::{Scalar, Tensor};

/// Output extent of a convolution or pooling window sweep, floored when the
/// stride does not divide the padded span.
pub fn conv_output_dims(
    m: usize,
    n: usize,
    f_h: usize,
    f_w: usize,
    padding: usize,
    s_h: usize,
    s_w: usize,
) -> Result<(usize, usize)> {
    if f_h == 0 || f_w == 0 || s_h == 0 || s_w == 0 {
        return Err(Error::InvalidConfig(
            "kernel and stride extents must be at least 1".into(),
        ));
    }
    let axis = |extent: usize, k: usize, s: usize| -> Result<usize> {
        let padded = extent + 2 * padding;
        if padded < k {
            return Err(Error::NonPositiveOutput(format!(
                "kernel {k} exceeds padded input {padded}"
            )));
        }
        Ok((padded - k) / s + 1)
    };
    Ok((axis(m, f_h, s_h)?, axis(n, f_w, s_w)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer<T = f32> {
    pub filters: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: usize,
    pub activation: Activation,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayer<T> {
    /// Zero-initialized layer.
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: usize,
        activation: Activation,
    ) -> Result<Self> {
        if in_channels == 0 || filters == 0 || kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::InvalidArchitecture(
                "convolution extents must be positive".into(),
            ));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidArchitecture("stride must be at least 1".into()));
        }
        if activation == Activation::Softmax {
            return Err(Error::InvalidArchitecture(
                "softmax is only allowed on the output dense layer".into(),
            ));
        }
        Ok(Self {
            filters,
            kernel,
            stride,
            padding,
            activation,
            weights: Tensor::zeros(&[kernel.0, kernel.1, in_channels, filters]),
            bias: Tensor::zeros(&[filters]),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn patch_len(&self) -> usize {
        self.kernel.0 * self.kernel.1 * self.in_channels()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let [h, w, c] = hwc(input)?;
        if c != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "convolution expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let (oh, ow) = conv_output_dims(
            h,
            w,
            self.kernel.0,
            self.kernel.1,
            self.padding,
            self.stride.0,
            self.stride.1,
        )?;
        Ok([oh, ow, self.filters])
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let ws = self.weights.shape();
        if ws.len() != 4
            || ws[0] != self.kernel.0
            || ws[1] != self.kernel.1
            || ws[3] != self.filters
        {
            return Err(Error::InvalidArchitecture(format!(
                "conv weights {ws:?} disagree with kernel {:?} / {} filters",
                self.kernel, self.filters
            )));
        }
        if self.bias.shape() != [self.filters] {
            return Err(Error::InvalidArchitecture(format!(
                "conv bias {:?} must have {} entries",
                self.bias.shape(),
                self.filters
            )));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::InvalidArchitecture("stride must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn hwc(shape: &[usize]) -> Result<[usize; 3]> {
    match *shape {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(Error::ShapeMismatch(format!(
            "expected [h, w, c], got {shape:?}"
        ))),
    }
}

/// Patch matrix: row `p = i * out_w + j` holds the receptive field of output
/// pixel `(i, j)` in `(u, v, k')` order; out-of-bounds taps are zero.
pub(crate) fn im2col<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>, out: [usize; 3]) -> Vec<T> {
    let [h, w, c] = hwc(input.shape()).expect("validated rank");
    let (fh, fw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let pad = layer.padding as isize;
    let k_len = fh * fw * c;
    let x = input.data();
    let mut col = vec![T::zero(); out[0] * out[1] * k_len];
    for i in 0..out[0] {
        for j in 0..out[1] {
            let row = &mut col[(i * out[1] + j) * k_len..][..k_len];
            for u in 0..fh {
                let ii = (i * sh + u) as isize - pad;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for v in 0..fw {
                    let jj = (j * sw + v) as isize - pad;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    let src = (ii as usize * w + jj as usize) * c;
                    row[(u * fw + v) * c..][..c].copy_from_slice(&x[src..src + c]);
                }
            }
        }
    }
    col
}

/// Pre-activation output `col x W + b`.
pub(crate) fn forward_pre<T: Scalar>(col: &[T], layer: &ConvLayer<T>, out: [usize; 3]) -> Tensor<T> {
    let k_len = layer.patch_len();
    let f = layer.filters;
    let w = layer.weights.data();
    let b = layer.bias.data();
    let pixels = out[0] * out[1];
    let mut z = vec![T::zero(); pixels * f];
    for p in 0..pixels {
        let zrow = &mut z[p * f..][..f];
        zrow.copy_from_slice(b);
        for (k, &a) in col[p * k_len..][..k_len].iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (o, &wk) in zrow.iter_mut().zip(&w[k * f..][..f]) {
                *o += a * wk;
            }
        }
    }
    Tensor::new(out.to_vec(), z).expect("output shape is consistent")
}

/// Accumulates weight/bias gradients and optionally returns the input gradient.
pub(crate) fn backward<T: Scalar>(
    col: &[T],
    dz: &[T],
    layer: &ConvLayer<T>,
    input_shape: &[usize],
    dw: &mut [T],
    db: &mut [T],
    want_input_grad: bool,
) -> Option<Tensor<T>> {
    let k_len = layer.patch_len();
    let f = layer.filters;
    let pixels = dz.len() / f;
    for p in 0..pixels {
        let drow = &dz[p * f..][..f];
        for (acc, &g) in db.iter_mut().zip(drow) {
            *acc += g;
        }
        for (k, &a) in col[p * k_len..][..k_len].iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (acc, &g) in dw[k * f..][..f].iter_mut().zip(drow) {
                *acc += a * g;
            }
        }
    }
    if !want_input_grad {
        return None;
    }

    let [h, w, c] = hwc(input_shape).expect("validated rank");
    let (fh, fw) = layer.kernel;
    let (sh, sw) = layer.stride;
    let pad = layer.padding as isize;
    let out_w = {
        let (_, ow) = conv_output_dims(h, w, fh, fw, layer.padding, sh, sw).expect("validated");
        ow
    };
    let wt = layer.weights.data();
    let mut dx = vec![T::zero(); h * w * c];
    let mut dcol = vec![T::zero(); k_len];
    for p in 0..pixels {
        let drow = &dz[p * f..][..f];
        if drow.iter().all(|&g| g == T::zero()) {
            continue;
        }
        for (k, d) in dcol.iter_mut().enumerate() {
            *d = crate::tensor::dot(&wt[k * f..][..f], drow);
        }
        let (i, j) = (p / out_w, p % out_w);
        for u in 0..fh {
            let ii = (i * sh + u) as isize - pad;
            if ii < 0 || ii >= h as isize {
                continue;
            }
            for v in 0..fw {
                let jj = (j * sw + v) as isize - pad;
                if jj < 0 || jj >= w as isize {
                    continue;
                }
                let dst = (ii as usize * w + jj as usize) * c;
                for (o, &g) in dx[dst..dst + c].iter_mut().zip(&dcol[(u * fw + v) * c..][..c]) {
                    *o += g;
                }
            }
        }
    }
    Some(Tensor::new(input_shape.to_vec(), dx).expect("input shape"))
}

/// Convolution followed by the layer's activation.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    layer.validate()?;
    let out = layer.output_shape(input.shape())?;
    let col = im2col(input, layer, out);
    let mut z = forward_pre(&col, layer, out);
    activate_in_place(z.data_mut(), layer.activation)?;
    Ok(z)
}
