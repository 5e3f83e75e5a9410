use crate::error::{Error, Result};

/// 8-bit raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ShapeMismatch("image extents must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedVariant(format!("{channels} channels")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Mean sample value of one channel, in 8-bit units.
    pub fn channel_mean(&self, c: usize) -> f64 {
        let sum: u64 = self
            .pixels
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&v| v as u64)
            .sum();
        sum as f64 / (self.width * self.height) as f64
    }
}
