//! Sequential network container, forward cache and backpropagation.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::activation::{activate_in_place, backward_in_place, Activation};
use crate::nn::conv::{self, ConvLayer};
use crate::nn::dense::DenseLayer;
use crate::nn::pool::{self, PoolLayer};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Conv(ConvLayer<T>),
    MaxPool(PoolLayer),
    Flatten,
    GlobalAvgPool,
    Dense(DenseLayer<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv2d",
            Layer::MaxPool(_) => "max_pool2d",
            Layer::Flatten => "flatten",
            Layer::GlobalAvgPool => "global_average_pool",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv(c) => c.output_shape(input).map(|s| s.to_vec()),
            Layer::MaxPool(p) => p.output_shape(input).map(|s| s.to_vec()),
            Layer::Flatten => {
                conv::hwc(input)?;
                Ok(vec![input.iter().product()])
            }
            Layer::GlobalAvgPool => Ok(vec![conv::hwc(input)?[2]]),
            Layer::Dense(d) => {
                if input != [d.in_units()] {
                    return Err(Error::ShapeMismatch(format!(
                        "dense layer expects [{}], got {input:?}",
                        d.in_units()
                    )));
                }
                Ok(vec![d.units])
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }

    fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            Layer::Conv(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Conv(c) => Layer::Conv(ConvLayer {
                filters: c.filters,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
                activation: c.activation,
                weights: c.weights.cast(),
                bias: c.bias.cast(),
            }),
            Layer::MaxPool(p) => Layer::MaxPool(*p),
            Layer::Flatten => Layer::Flatten,
            Layer::GlobalAvgPool => Layer::GlobalAvgPool,
            Layer::Dense(d) => Layer::Dense(DenseLayer {
                units: d.units,
                activation: d.activation,
                weights: d.weights.cast(),
                bias: d.bias.cast(),
            }),
        }
    }
}

/// What the network's terminal layer produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Softmax over `k` classes.
    Multiclass(usize),
    /// Single sigmoid unit.
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    input_shape: [usize; 3],
    layers: Vec<Layer<T>>,
}

/// Per-layer intermediates recorded by [`Network::forward_cached`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T = f32> {
    input_shape: Vec<usize>,
    layers: Vec<LayerCache<T>>,
}

#[derive(Debug, Clone)]
enum LayerCache<T> {
    Conv {
        input_shape: Vec<usize>,
        col: Vec<T>,
        pre: Vec<T>,
        out: Vec<T>,
    },
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Flatten,
    Gap {
        input_shape: Vec<usize>,
    },
    Dense {
        input: Vec<T>,
        pre: Vec<T>,
        out: Vec<T>,
    },
}

/// Gradients of every trainable tensor in [`Network::params`] order, plus the
/// gradient w.r.t. the network input when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub params: Vec<Tensor<T>>,
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            params: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            input: None,
        }
    }

    /// Accumulates parameter gradients; input gradients are dropped.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: T) {
        self.params.iter_mut().for_each(|p| p.scale(k));
    }
}

/// Where the upstream gradient handed to backward is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientAt {
    /// Gradient w.r.t. the activated network output.
    Output,
    /// Gradient w.r.t. the terminal pre-activation (fused loss + activation).
    Logits,
}

impl<T: Scalar> Network<T> {
    /// Builds and validates a network.
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer<T>>) -> Result<Self> {
        let net = Self {
            input_shape,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_shape.contains(&0) {
            return Err(Error::InvalidArchitecture("input extents must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidArchitecture("network has no layers".into()));
        }
        let mut shape = self.input_shape.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(c) => c.validate()?,
                Layer::MaxPool(p) => p.validate()?,
                Layer::Dense(d) => {
                    d.validate()?;
                    if d.activation == Activation::Softmax && i != last {
                        return Err(Error::InvalidArchitecture(
                            "softmax is only allowed on the terminal layer".into(),
                        ));
                    }
                }
                _ => {}
            }
            shape = layer.output_shape(&shape).map_err(|e| {
                Error::InvalidArchitecture(format!("layer {i} ({}): {e}", layer.kind()))
            })?;
        }
        self.head().map(|_| ())
    }

    pub fn head(&self) -> Result<Head> {
        match self.layers.last() {
            Some(Layer::Dense(d)) if d.activation == Activation::Softmax => {
                Ok(Head::Multiclass(d.units))
            }
            Some(Layer::Dense(d)) if d.activation == Activation::Sigmoid && d.units == 1 => {
                Ok(Head::Binary)
            }
            _ => Err(Error::InvalidArchitecture(
                "network must end in a softmax dense layer or a single sigmoid unit".into(),
            )),
        }
    }

    /// Output shape after every layer, in order.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.to_vec();
        let mut chain = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            chain.push(shape.clone());
        }
        Ok(chain)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shape_chain()?.pop().expect("non-empty"))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Trainable tensors, weights then bias for each layer in order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .filter_map(Layer::params_mut)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Uniform He initialization, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// with zero biases. Deterministic in `seed`.
    pub fn init_he_uniform(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = match layer {
                Layer::Conv(c) => c.patch_len(),
                Layer::Dense(d) => d.in_units(),
                _ => continue,
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new(-limit, limit).expect("finite bounds");
            let (w, b) = layer.params_mut().expect("trainable layer");
            for x in w.data_mut() {
                *x = T::from_f64(dist.sample(&mut rng));
            }
            b.fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape,
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape() != self.input_shape {
            return Err(Error::ShapeMismatch(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(c) => crate::nn::conv2d_forward(&x, c)?,
                Layer::MaxPool(p) => pool::maxpool2d(&x, p)?,
                Layer::Flatten => pool::flatten(&x),
                Layer::GlobalAvgPool => pool::global_average_pool(&x)?,
                Layer::Dense(d) => crate::nn::dense_forward(&x, d)?,
            };
        }
        Ok(x)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let mut cache = ForwardCache {
            input_shape: input.shape().to_vec(),
            layers: Vec::with_capacity(self.layers.len()),
        };
        let mut x = input.clone();
        for layer in &self.layers {
            let input_shape = x.shape().to_vec();
            let (next, entry) = match layer {
                Layer::Conv(c) => {
                    let out_shape = c.output_shape(&input_shape)?;
                    let col = conv::im2col(&x, c, out_shape);
                    let pre = conv::forward_pre(&col, c, out_shape);
                    let mut out = pre.clone();
                    activate_in_place(out.data_mut(), c.activation)?;
                    let entry = LayerCache::Conv {
                        input_shape,
                        col,
                        pre: pre.into_data(),
                        out: out.data().to_vec(),
                    };
                    (out, entry)
                }
                Layer::MaxPool(p) => {
                    let (out, argmax) = pool::maxpool2d_with_argmax(&x, p)?;
                    (out, LayerCache::Pool { input_shape, argmax })
                }
                Layer::Flatten => (pool::flatten(&x), LayerCache::Flatten),
                Layer::GlobalAvgPool => {
                    (pool::global_average_pool(&x)?, LayerCache::Gap { input_shape })
                }
                Layer::Dense(d) => {
                    let pre = d.forward_pre(x.data())?;
                    let mut out = pre.clone();
                    activate_in_place(&mut out, d.activation)?;
                    let entry = LayerCache::Dense {
                        input: x.into_data(),
                        pre,
                        out: out.clone(),
                    };
                    (Tensor::from_vec(out), entry)
                }
            };
            cache.layers.push(entry);
            x = next;
        }
        Ok((x, cache))
    }

    /// Backpropagates `upstream` (∂loss/∂output) and returns ∂loss/∂θ for every
    /// trainable tensor together with ∂loss/∂input.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_with(cache, upstream, GradientAt::Output, true)
    }

    pub fn backward_with(
        &self,
        cache: &ForwardCache<T>,
        upstream: &Tensor<T>,
        at: GradientAt,
        want_input_grad: bool,
    ) -> Result<Gradients<T>> {
        if cache.layers.len() != self.layers.len() || cache.input_shape != self.input_shape {
            return Err(Error::MissingForwardCache);
        }
        let out_shape = self.output_shape()?;
        if upstream.shape() != out_shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                out_shape
            )));
        }

        let mut grads = Gradients::zeros_like(self);
        let mut slot = grads.params.len();
        let mut g = upstream.data().to_vec();
        let last = self.layers.len() - 1;

        for (idx, (layer, entry)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let need_dx = want_input_grad || idx > 0;
            let skip_activation = idx == last && at == GradientAt::Logits;
            g = match (layer, entry) {
                (
                    Layer::Conv(c),
                    LayerCache::Conv {
                        input_shape,
                        col,
                        pre,
                        out,
                    },
                ) => {
                    if g.len() != out.len() {
                        return Err(Error::MissingForwardCache);
                    }
                    if !skip_activation {
                        backward_in_place(&mut g, pre, out, c.activation);
                    }
                    slot -= 2;
                    let (dw, db) = split_pair(&mut grads.params, slot);
                    let dx = conv::backward(col, &g, c, input_shape, dw, db, need_dx);
                    dx.map(Tensor::into_data).unwrap_or_default()
                }
                (Layer::MaxPool(_), LayerCache::Pool { input_shape, argmax }) => {
                    pool::maxpool_backward(&g, argmax, input_shape).into_data()
                }
                (Layer::Flatten, LayerCache::Flatten) => g,
                (Layer::GlobalAvgPool, LayerCache::Gap { input_shape }) => {
                    pool::gap_backward(&g, input_shape).into_data()
                }
                (Layer::Dense(d), LayerCache::Dense { input, pre, out }) => {
                    if g.len() != out.len() || input.len() != d.in_units() {
                        return Err(Error::MissingForwardCache);
                    }
                    if !skip_activation {
                        backward_in_place(&mut g, pre, out, d.activation);
                    }
                    slot -= 2;
                    let (dw, db) = split_pair(&mut grads.params, slot);
                    d.backward(input, &g, dw, db, need_dx).unwrap_or_default()
                }
                _ => return Err(Error::MissingForwardCache),
            };
        }
        if want_input_grad {
            grads.input = Some(Tensor::new(self.input_shape.to_vec(), g)?);
        }
        Ok(grads)
    }
}

fn split_pair<T>(params: &mut [Tensor<T>], slot: usize) -> (&mut [T], &mut [T])
where
    T: Scalar,
{
    let (w, b) = params[slot..slot + 2].split_at_mut(1);
    (w[0].data_mut(), b[0].data_mut())
}

pub fn count_parameters<T: Scalar>(net: &Network<T>) -> usize {
    net.param_count()
}
