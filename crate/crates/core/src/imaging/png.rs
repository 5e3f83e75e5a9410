//! Minimal PNG support backed by the `png` crate: 8-bit grayscale or RGB,
//! non-interlaced. Anything else is reported as an unsupported variant.

use std::io::Cursor;

use crate::error::{Error, Result};
use crate::imaging::RasterImage;

pub fn decode(bytes: &[u8]) -> Result<RasterImage> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::MalformedFile(format!("png: {e}")))?;
    let info = reader.info();
    if info.interlaced {
        return Err(Error::UnsupportedVariant("interlaced png".into()));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedVariant(format!("png bit depth {:?}", info.bit_depth)));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(Error::UnsupportedVariant(format!("png color type {other:?}"))),
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::MalformedFile("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::MalformedFile(format!("png: {e}")))?;
    buf.truncate(frame.buffer_size());
    RasterImage::new(width, height, channels, buf)
}

pub fn encode(img: &RasterImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::MalformedFile(format!("png: {e}")))?;
        writer
            .write_image_data(img.pixels())
            .map_err(|e| Error::MalformedFile(format!("png: {e}")))?;
    }
    Ok(out)
}
