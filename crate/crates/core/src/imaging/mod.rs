//! Raster I/O, resizing, channel extraction and augmentation.

mod augment;
mod channel;
pub mod png;
pub mod pnm;
mod raster;
mod resize;

use serde::{Deserialize, Serialize};

pub use augment::{apply as apply_augment, augment, AugmentParams, AugmentSpec};
pub use channel::{extract_channel, ChannelMode, Plane};
pub use raster::RasterImage;
pub use resize::resize_bilinear;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Pgm,
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "pgm" => Some(ImageFormat::Pgm),
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }

    /// Sniffs the leading magic bytes.
    pub fn detect(bytes: &[u8]) -> Option<Self> {
        match bytes {
            [b'P', b'5', ..] => Some(ImageFormat::Pgm),
            [b'P', b'6', ..] => Some(ImageFormat::Ppm),
            [0x89, b'P', b'N', b'G', ..] => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<RasterImage> {
    match format {
        ImageFormat::Pgm | ImageFormat::Ppm => {
            let img = pnm::decode(bytes)?;
            let expected = if format == ImageFormat::Pgm { 1 } else { 3 };
            if img.channels() != expected {
                return Err(Error::MalformedFile(format!(
                    "{format:?} file carries {} channels",
                    img.channels()
                )));
            }
            Ok(img)
        }
        ImageFormat::Png => png::decode(bytes),
    }
}

pub fn encode_image(img: &RasterImage, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Pgm | ImageFormat::Ppm => {
            let expected = if format == ImageFormat::Pgm { 1 } else { 3 };
            if img.channels() != expected {
                return Err(Error::ChannelMismatch(format!(
                    "{format:?} needs {expected} channels, image has {}",
                    img.channels()
                )));
            }
            Ok(pnm::encode(img))
        }
        ImageFormat::Png => png::encode(img),
    }
}

/// Reads an image file, choosing the decoder from its magic bytes.
pub fn read_image(path: &std::path::Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = ImageFormat::detect(&bytes)
        .ok_or_else(|| Error::MalformedFile(format!("{}: unknown image format", path.display())))?;
    decode_image(&bytes, format)
}
