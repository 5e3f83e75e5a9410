//! Channel extraction: keep the colour plane that matches the laser.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RasterImage;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Red,
    Green,
    Blue,
}

impl Plane {
    pub fn index(self) -> usize {
        match self {
            Plane::Red => 0,
            Plane::Green => 1,
            Plane::Blue => 2,
        }
    }

    /// Blue below 500 nm, green below 600 nm, red up to 750 nm.
    pub fn from_wavelength(nm: f64) -> Result<Self> {
        match nm {
            x if (380.0..500.0).contains(&x) => Ok(Plane::Blue),
            x if (500.0..600.0).contains(&x) => Ok(Plane::Green),
            x if (600.0..=750.0).contains(&x) => Ok(Plane::Red),
            _ => Err(Error::WavelengthOutOfRange(nm)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Rgb,
    Red,
    Green,
    Blue,
    /// Luma with (0.299, 0.587, 0.114).
    Grayscale,
    /// Green-dominant average (0.10, 0.80, 0.10).
    WeightedGrayscale,
    ByWavelength(f64),
}

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];
const GREEN_WEIGHTED: [f64; 3] = [0.10, 0.80, 0.10];

impl ChannelMode {
    pub fn output_channels(self) -> usize {
        match self {
            ChannelMode::Rgb => 3,
            _ => 1,
        }
    }

    /// The single plane this mode selects, resolving wavelengths.
    pub fn plane(self) -> Result<Option<Plane>> {
        Ok(match self {
            ChannelMode::Red => Some(Plane::Red),
            ChannelMode::Green => Some(Plane::Green),
            ChannelMode::Blue => Some(Plane::Blue),
            ChannelMode::ByWavelength(nm) => Some(Plane::from_wavelength(nm)?),
            _ => None,
        })
    }
}

impl From<Plane> for ChannelMode {
    fn from(p: Plane) -> Self {
        match p {
            Plane::Red => ChannelMode::Red,
            Plane::Green => ChannelMode::Green,
            Plane::Blue => ChannelMode::Blue,
        }
    }
}

/// Converts an 8-bit raster into a `[h, w, c]` tensor scaled to `[0, 1]`.
pub fn extract_channel(img: &RasterImage, mode: ChannelMode) -> Result<Tensor<f32>> {
    let (h, w) = (img.height(), img.width());
    let px = img.pixels();
    let scale = |v: f64| (v / 255.0) as f32;

    if img.channels() == 1 {
        return match mode {
            ChannelMode::Grayscale | ChannelMode::WeightedGrayscale => Tensor::new(
                vec![h, w, 1],
                px.iter().map(|&v| scale(v as f64)).collect(),
            ),
            _ => Err(Error::ChannelMismatch(format!(
                "mode {mode:?} needs a 3-channel image"
            ))),
        };
    }

    if let Some(plane) = mode.plane()? {
        let k = plane.index();
        return Tensor::new(
            vec![h, w, 1],
            px.chunks_exact(3).map(|p| scale(p[k] as f64)).collect(),
        );
    }
    let weighted = |coef: [f64; 3]| {
        px.chunks_exact(3)
            .map(|p| {
                let v = coef[0] * p[0] as f64 + coef[1] * p[1] as f64 + coef[2] * p[2] as f64;
                scale(v).min(1.0)
            })
            .collect::<Vec<_>>()
    };
    match mode {
        ChannelMode::Rgb => Tensor::new(vec![h, w, 3], px.iter().map(|&v| scale(v as f64)).collect()),
        ChannelMode::Grayscale => Tensor::new(vec![h, w, 1], weighted(LUMA)),
        ChannelMode::WeightedGrayscale => Tensor::new(vec![h, w, 1], weighted(GREEN_WEIGHTED)),
        _ => unreachable!("single-plane modes handled above"),
    }
}
