//! Layer math: convolution, pooling, activations, dense layers and the
//! sequential network with backpropagation.

mod activation;
mod conv;
mod dense;
mod network;
mod pool;

pub use activation::{activate, sigmoid, softmax, Activation};
pub use conv::{conv2d_forward, conv_output_dims, ConvLayer};
pub use dense::{dense_forward, DenseLayer};
pub use network::{count_parameters, ForwardCache, GradientAt, Gradients, Head, Layer, Network};
pub use pool::{flatten, global_average_pool, maxpool2d, maxpool2d_with_argmax, PoolLayer};
