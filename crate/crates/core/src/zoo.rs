//! Canonical architectures: the speckle material classifier and the binary
//! smoke detector built on the same convolutional backbone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, ConvLayer, DenseLayer, Layer, Network, PoolLayer};

pub const SUPPORTED_INPUT_SIDES: [usize; 4] = [64, 128, 224, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ArchitectureId {
    Ch3Material {
        num_classes: usize,
        input_side: usize,
    },
    SmokeBinary {
        input_side: usize,
    },
}

impl ArchitectureId {
    pub fn ch3_material(num_classes: usize, input_side: usize) -> Self {
        ArchitectureId::Ch3Material {
            num_classes,
            input_side,
        }
    }

    pub fn smoke_binary(input_side: usize) -> Self {
        ArchitectureId::SmokeBinary { input_side }
    }

    pub fn input_side(&self) -> usize {
        match *self {
            ArchitectureId::Ch3Material { input_side, .. } => input_side,
            ArchitectureId::SmokeBinary { input_side } => input_side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ArchitectureId::Ch3Material { num_classes, .. } = *self {
            if num_classes < 2 {
                return Err(Error::InvalidArchitecture(format!(
                    "a material classifier needs at least 2 classes, got {num_classes}"
                )));
            }
        }
        if !SUPPORTED_INPUT_SIDES.contains(&self.input_side()) {
            return Err(Error::InvalidArchitecture(format!(
                "input side {} not in {SUPPORTED_INPUT_SIDES:?}",
                self.input_side()
            )));
        }
        Ok(())
    }
}

/// Knobs outside the architecture id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// 1 for single-plane extraction, 3 for RGB.
    pub in_channels: usize,
    /// Width of the hidden dense layer; `None` picks 512 for the material
    /// classifier and 256 for the smoke detector.
    pub head_width: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            in_channels: 1,
            head_width: None,
        }
    }
}

/// Zero-initialized network; call [`Network::init_he_uniform`] before training.
pub fn build(arch: ArchitectureId) -> Result<Network<f32>> {
    build_with(arch, BuildOptions::default())
}

pub fn build_with(arch: ArchitectureId, opts: BuildOptions) -> Result<Network<f32>> {
    arch.validate()?;
    if opts.in_channels == 0 || opts.head_width == Some(0) {
        return Err(Error::InvalidArchitecture("extents must be positive".into()));
    }
    let side = arch.input_side();
    let mut layers = Vec::with_capacity(11);
    let mut channels = opts.in_channels;
    let mut spatial = side;
    for filters in [32, 64, 128, 128] {
        layers.push(Layer::Conv(ConvLayer::new(
            channels,
            filters,
            (3, 3),
            (1, 1),
            0,
            Activation::Relu,
        )?));
        layers.push(Layer::MaxPool(PoolLayer::new((2, 2), (2, 2), 0)?));
        channels = filters;
        spatial = (spatial - 2) / 2;
    }
    layers.push(Layer::Flatten);
    let flat = spatial * spatial * channels;
    let (hidden, head) = match arch {
        ArchitectureId::Ch3Material { num_classes, .. } => (
            opts.head_width.unwrap_or(512),
            (num_classes, Activation::Softmax),
        ),
        ArchitectureId::SmokeBinary { .. } => (opts.head_width.unwrap_or(256), (1, Activation::Sigmoid)),
    };
    layers.push(Layer::Dense(DenseLayer::new(flat, hidden, Activation::Relu)?));
    layers.push(Layer::Dense(DenseLayer::new(hidden, head.0, head.1)?));
    Network::new([side, side, opts.in_channels], layers)
}
