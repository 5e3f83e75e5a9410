//! Binary model checkpoints.
//!
//! Layout: `"SPKL"`, format version (u32 LE), header length (u32 LE), JSON
//! header, little-endian f32 payload of every weight then bias tensor in
//! layer order, CRC-32 of the payload (u32 LE).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ChannelMode;
use crate::nn::{Activation, ConvLayer, DenseLayer, Layer, Network, PoolLayer};
use crate::zoo::ArchitectureId;

pub const MAGIC: &[u8; 4] = b"SPKL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// Label order of the output head.
    pub class_names: Vec<String>,
    pub channel_mode: ChannelMode,
    pub wavelength_nm: Option<f64>,
    pub architecture: Option<ArchitectureId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerSpec {
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: usize,
        activation: Activation,
    },
    MaxPool2d {
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: usize,
    },
    Flatten,
    GlobalAveragePool,
    Dense {
        in_units: usize,
        units: usize,
        activation: Activation,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    /// Declared parameter tensor shapes in payload order.
    tensors: Vec<Vec<usize>>,
    meta: CheckpointMeta,
}

fn describe(layer: &Layer<f32>) -> LayerSpec {
    match layer {
        Layer::Conv(c) => LayerSpec::Conv2d {
            in_channels: c.in_channels(),
            filters: c.filters,
            kernel: c.kernel,
            stride: c.stride,
            padding: c.padding,
            activation: c.activation,
        },
        Layer::MaxPool(p) => LayerSpec::MaxPool2d {
            kernel: p.kernel,
            stride: p.stride,
            padding: p.padding,
        },
        Layer::Flatten => LayerSpec::Flatten,
        Layer::GlobalAvgPool => LayerSpec::GlobalAveragePool,
        Layer::Dense(d) => LayerSpec::Dense {
            in_units: d.in_units(),
            units: d.units,
            activation: d.activation,
        },
    }
}

fn rebuild(spec: &LayerSpec) -> Result<Layer<f32>> {
    Ok(match *spec {
        LayerSpec::Conv2d {
            in_channels,
            filters,
            kernel,
            stride,
            padding,
            activation,
        } => Layer::Conv(ConvLayer::new(in_channels, filters, kernel, stride, padding, activation)?),
        LayerSpec::MaxPool2d { kernel, stride, padding } => Layer::MaxPool(PoolLayer::new(kernel, stride, padding)?),
        LayerSpec::Flatten => Layer::Flatten,
        LayerSpec::GlobalAveragePool => Layer::GlobalAvgPool,
        LayerSpec::Dense {
            in_units,
            units,
            activation,
        } => Layer::Dense(DenseLayer::new(in_units, units, activation)?),
    })
}

pub fn encode(net: &Network<f32>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = Header {
        input_shape: net.input_shape(),
        layers: net.layers().iter().map(describe).collect(),
        tensors: net.params().iter().map(|t| t.shape().to_vec()).collect(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut payload = Vec::with_capacity(net.param_count() * 4);
    for t in net.params() {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
        .ok_or(Error::TruncatedFile)
}

pub fn decode(bytes: &[u8]) -> Result<(Network<f32>, CheckpointMeta)> {
    match bytes.get(..4) {
        Some(m) if m == MAGIC => {}
        Some(_) => return Err(Error::BadMagic),
        None => return Err(Error::TruncatedFile),
    }
    let version = read_u32(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_bytes = bytes.get(12..12 + header_len).ok_or(Error::TruncatedFile)?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| Error::MalformedFile(format!("checkpoint header: {e}")))?;

    let layers = header.layers.iter().map(rebuild).collect::<Result<Vec<_>>>()?;
    let mut net = Network::new(header.input_shape, layers)?;
    let shapes: Vec<Vec<usize>> = net.params().iter().map(|t| t.shape().to_vec()).collect();
    if shapes != header.tensors {
        return Err(Error::MalformedFile("declared tensor shapes disagree with the layers".into()));
    }
    let floats: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    let start = 12 + header_len;
    let rest = bytes.len() - start;
    if rest < floats * 4 + 4 {
        return Err(Error::TruncatedFile);
    }
    if rest > floats * 4 + 4 {
        return Err(Error::MalformedFile(format!("{} trailing bytes", rest - floats * 4 - 4)));
    }
    let payload = &bytes[start..start + floats * 4];
    if crc32fast::hash(payload) != read_u32(bytes, start + floats * 4)? {
        return Err(Error::CrcMismatch);
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")));
    for t in net.params_mut() {
        for v in t.data_mut() {
            *v = values.next().expect("payload length checked");
        }
    }
    Ok((net, header.meta))
}

pub fn save(net: &Network<f32>, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(net, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Network<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
