use crate::imaging::RasterImage;

/// Source coordinate of output sample `i` on a corner-aligned grid.
#[inline]
fn source_coord(i: usize, out: usize, input: usize) -> f64 {
    if out == 1 {
        (input - 1) as f64 / 2.0
    } else {
        (i * (input - 1)) as f64 / (out - 1) as f64
    }
}

/// Bilinear resize with corners mapped onto corners; samples are rounded to
/// the nearest 8-bit value.
pub fn resize_bilinear(img: &RasterImage, out_h: usize, out_w: usize) -> RasterImage {
    assert!(out_h >= 1 && out_w >= 1, "output extents must be positive");
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if (out_h, out_w) == (h, w) {
        return img.clone();
    }
    let src = img.pixels();
    let xs: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|x| {
            let sx = source_coord(x, out_w, w);
            let x0 = sx.floor() as usize;
            (x0, (x0 + 1).min(w - 1), sx - x0 as f64)
        })
        .collect();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let sy = source_coord(y, out_h, h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for &(x0, x1, fx) in &xs {
            for k in 0..c {
                let at = |yy: usize, xx: usize| src[(yy * w + xx) * c + k] as f64;
                let top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
                let bottom = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
                let v = top + fy * (bottom - top);
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(out_w, out_h, c, out).expect("consistent output size")
}
