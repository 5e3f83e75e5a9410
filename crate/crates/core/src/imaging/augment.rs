//! Seeded geometric augmentation: flip, rotation, zoom and shift.
//!
//! Parameters for a given image are a pure function of `(seed, draw_index)`;
//! the ChaCha stream index carries the draw index so draws never overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    /// Multiplicative magnification interval.
    pub zoom_range: (f64, f64),
    pub rotation_max_deg: f64,
    /// Fraction of the width/height.
    pub width_shift: f64,
    pub height_shift: f64,
    pub horizontal_flip: bool,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self::material_profile(0)
    }
}

/// Concrete transform drawn for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub zoom: f64,
    pub rotation_deg: f64,
    /// Shifts in pixels.
    pub dx: f64,
    pub dy: f64,
    pub flip: bool,
}

impl AugmentSpec {
    /// Zoom ±20 % only.
    pub fn material_profile(seed: u64) -> Self {
        Self {
            zoom_range: (0.8, 1.2),
            rotation_max_deg: 0.0,
            width_shift: 0.0,
            height_shift: 0.0,
            horizontal_flip: false,
            seed,
        }
    }

    /// Zoom ±20 %, rotation 40°, 20 % shifts and horizontal flips.
    pub fn camera_profile(seed: u64) -> Self {
        Self {
            zoom_range: (0.8, 1.2),
            rotation_max_deg: 40.0,
            width_shift: 0.2,
            height_shift: 0.2,
            horizontal_flip: true,
            seed,
        }
    }

    pub fn identity() -> Self {
        Self {
            zoom_range: (1.0, 1.0),
            rotation_max_deg: 0.0,
            width_shift: 0.0,
            height_shift: 0.0,
            horizontal_flip: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.zoom_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("zoom range {:?}", self.zoom_range)));
        }
        if !(0.0..=180.0).contains(&self.rotation_max_deg) {
            return Err(Error::InvalidConfig("rotation must lie in [0, 180] degrees".into()));
        }
        for s in [self.width_shift, self.height_shift] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::InvalidConfig("shifts must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }

    pub fn sample(&self, draw_index: u64, width: usize, height: usize) -> AugmentParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(draw_index);
        let mut uniform = |lo: f64, hi: f64| lo + rng.random::<f64>() * (hi - lo);
        let zoom = uniform(self.zoom_range.0, self.zoom_range.1);
        let rotation_deg = uniform(-self.rotation_max_deg, self.rotation_max_deg);
        let dx = uniform(-self.width_shift, self.width_shift) * width as f64;
        let dy = uniform(-self.height_shift, self.height_shift) * height as f64;
        let flip = uniform(0.0, 1.0) < 0.5 && self.horizontal_flip;
        AugmentParams {
            zoom,
            rotation_deg,
            dx,
            dy,
            flip,
        }
    }
}

/// Applies the transform drawn for `draw_index` to a `[h, w, c]` plane.
pub fn augment(plane: &Tensor<f32>, spec: &AugmentSpec, draw_index: u64) -> Result<Tensor<f32>> {
    let (h, w, _) = plane.hwc()?;
    let params = spec.sample(draw_index, w, h);
    apply(plane, &params)
}

/// Inverse-maps every output pixel through shift, zoom, rotation and flip and
/// samples the source bilinearly, treating out-of-bounds taps as zero.
pub fn apply(plane: &Tensor<f32>, p: &AugmentParams) -> Result<Tensor<f32>> {
    let (h, w, c) = plane.hwc()?;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = p.rotation_deg.to_radians().sin_cos();
    let src = plane.data();
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let x1 = x as f64 - p.dx;
            let y1 = y as f64 - p.dy;
            let x2 = cx + (x1 - cx) / p.zoom;
            let y2 = cy + (y1 - cy) / p.zoom;
            let x3 = cx + (cos * (x2 - cx) + sin * (y2 - cy));
            let y3 = cy + (cos * (y2 - cy) - sin * (x2 - cx));
            let sx = if p.flip { (w as f64 - 1.0) - x3 } else { x3 };
            let dst = &mut out[(y * w + x) * c..][..c];
            sample_bilinear(src, w, h, c, sx, y3, dst);
        }
    }
    Tensor::new(plane.shape().to_vec(), out)
}

fn sample_bilinear(src: &[f32], w: usize, h: usize, c: usize, x: f64, y: f64, dst: &mut [f32]) {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    if x0 < -1.0 || y0 < -1.0 || x0 >= w as f64 || y0 >= h as f64 {
        return;
    }
    let (x0, y0) = (x0 as isize, y0 as isize);
    let tap = |xx: isize, yy: isize, k: usize| -> f64 {
        if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
            0.0
        } else {
            src[(yy as usize * w + xx as usize) * c + k] as f64
        }
    };
    for (k, d) in dst.iter_mut().enumerate() {
        let v = tap(x0, y0, k) * (1.0 - fx) * (1.0 - fy)
            + tap(x0 + 1, y0, k) * fx * (1.0 - fy)
            + tap(x0, y0 + 1, k) * (1.0 - fx) * fy
            + tap(x0 + 1, y0 + 1, k) * fx * fy;
        *d = v as f32;
    }
}
