//! Binary netpbm: P5 (graymap) and P6 (pixmap), maxval 255.

use crate::error::{Error, Result};
use crate::imaging::RasterImage;

pub fn decode(bytes: &[u8]) -> Result<RasterImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        b"P1" | b"P2" | b"P3" | b"P4" | b"P7" => {
            return Err(Error::UnsupportedVariant(format!(
                "netpbm {}",
                String::from_utf8_lossy(magic)
            )))
        }
        _ => return Err(Error::MalformedFile("not a binary PGM/PPM".into())),
    };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(Error::UnsupportedVariant(format!("maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedFile("missing separator after header".into())),
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::MalformedFile("image too large".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < n {
        return Err(Error::MalformedFile(format!(
            "raster holds {} of {n} samples",
            raster.len()
        )));
    }
    RasterImage::new(width, height, channels, raster[..n].to_vec())
        .map_err(|e| Error::MalformedFile(e.to_string()))
}

pub fn encode(img: &RasterImage) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedFile("truncated header".into()));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| {
                Error::MalformedFile(format!(
                    "bad header field {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}
