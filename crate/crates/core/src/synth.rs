//! Procedural speckle patterns: Poisson-many elliptical Gaussian spots
//! rendered into the colour plane selected by the laser wavelength.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetIndex, Split};
use crate::error::{Error, Result};
use crate::imaging::{pnm, Plane, RasterImage};
use crate::json::to_stable_string;

const EXTRA_CLASS_NAMES: &[&str] = &[
    "wood", "mdf", "hardwood", "bamboo", "cork", "suede", "metal", "tpu", "petg", "delrin", "styrene",
    "abs", "lexan", "pvc", "silicone", "foamboard", "felt", "textile", "fabric", "cardstock",
    "matboard", "paper",
];

/// Noise in the two off-laser planes relative to the laser plane.
const CROSS_CHANNEL_NOISE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeckleClassSpec {
    pub class_name: String,
    /// Expected spots per 10⁴ pixels.
    pub spot_density: f64,
    /// Gaussian minor-axis sigma range in pixels.
    pub spot_radius: (f64, f64),
    /// Major/minor axis ratio, ≥ 1.
    pub anisotropy: f64,
    /// Peak amplitude in [0, 1].
    pub brightness: f64,
    /// Standard deviation of additive noise on the laser plane.
    pub background_noise: f64,
}

impl SpeckleClassSpec {
    pub fn new(
        class_name: &str,
        spot_density: f64,
        spot_radius: (f64, f64),
        anisotropy: f64,
        brightness: f64,
        background_noise: f64,
    ) -> Self {
        Self {
            class_name: class_name.to_string(),
            spot_density,
            spot_radius,
            anisotropy,
            brightness,
            background_noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("{}: {msg}", self.class_name)));
        if self.class_name.is_empty() || self.class_name.contains(['/', '\\']) {
            return bad("class names must be non-empty path components");
        }
        if !(self.spot_density > 0.0 && self.spot_density.is_finite()) {
            return bad("spot density must be positive");
        }
        let (lo, hi) = self.spot_radius;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("spot radius range must satisfy 0 < min <= max");
        }
        if !(self.anisotropy >= 1.0 && self.anisotropy.is_finite()) {
            return bad("anisotropy must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.brightness) {
            return bad("brightness must lie in [0, 1]");
        }
        if !(self.background_noise >= 0.0 && self.background_noise.is_finite()) {
            return bad("noise must be non-negative");
        }
        Ok(())
    }

    /// Expected spot count on a `side x side` image.
    pub fn expected_spots(&self, side: usize) -> f64 {
        self.spot_density * (side * side) as f64 / 1e4
    }
}

/// One rendered image plus the number of spots drawn into it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub image: RasterImage,
    pub spot_count: usize,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn image_rng(seed: u64, class_name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(class_name).rotate_left(17));
    rng.set_stream(index);
    rng
}

pub fn synth_speckle(
    spec: &SpeckleClassSpec,
    wavelength_nm: f64,
    size: usize,
    seed: u64,
    index: u64,
) -> Result<RasterImage> {
    synth_speckle_detailed(spec, wavelength_nm, size, seed, index).map(|s| s.image)
}

pub fn synth_speckle_detailed(
    spec: &SpeckleClassSpec,
    wavelength_nm: f64,
    size: usize,
    seed: u64,
    index: u64,
) -> Result<SynthImage> {
    spec.validate()?;
    if size == 0 {
        return Err(Error::InvalidConfig("image size must be positive".into()));
    }
    let plane = Plane::from_wavelength(wavelength_nm)?;
    let mut rng = image_rng(seed, &spec.class_name, index);

    let lambda = spec.expected_spots(size);
    let spot_count = Poisson::new(lambda)
        .map_err(|e| Error::InvalidConfig(format!("poisson rate {lambda}: {e}")))?
        .sample(&mut rng) as usize;

    let mut canvas = vec![0.0f64; size * size];
    let (r_lo, r_hi) = spec.spot_radius;
    for _ in 0..spot_count {
        let cx = rng.random::<f64>() * size as f64;
        let cy = rng.random::<f64>() * size as f64;
        let minor = r_lo + rng.random::<f64>() * (r_hi - r_lo);
        let major = minor * spec.anisotropy;
        let (sin, cos) = (rng.random::<f64>() * std::f64::consts::PI).sin_cos();
        let reach = 3.0 * major;
        let x_lo = (cx - reach).floor().max(0.0) as usize;
        let x_hi = ((cx + reach).ceil() as usize).min(size - 1);
        let y_lo = (cy - reach).floor().max(0.0) as usize;
        let y_hi = ((cy + reach).ceil() as usize).min(size - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                let e = 0.5 * (u * u / (major * major) + v * v / (minor * minor));
                canvas[y * size + x] += spec.brightness * (-e).exp();
            }
        }
    }

    let mut noise = |sigma: f64, values: &mut dyn Iterator<Item = f64>| -> Vec<u8> {
        let dist = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
        values
            .map(|v| {
                let n = dist.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                ((v + n).clamp(0.0, 1.0) * 255.0).round() as u8
            })
            .collect()
    };
    let laser = noise(spec.background_noise, &mut canvas.iter().copied());
    let off_sigma = spec.background_noise * CROSS_CHANNEL_NOISE;
    let off_a = noise(off_sigma, &mut std::iter::repeat_n(0.0, size * size));
    let off_b = noise(off_sigma, &mut std::iter::repeat_n(0.0, size * size));

    let mut others = [off_a, off_b].into_iter();
    let mut planes: [Vec<u8>; 3] = Default::default();
    for (k, slot) in planes.iter_mut().enumerate() {
        *slot = if k == plane.index() {
            laser.clone()
        } else {
            others.next().expect("two off-laser planes")
        };
    }
    let mut pixels = Vec::with_capacity(size * size * 3);
    for i in 0..size * size {
        pixels.extend([planes[0][i], planes[1][i], planes[2][i]]);
    }
    Ok(SynthImage {
        image: RasterImage::new(size, size, 3, pixels)?,
        spot_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDatasetSpec {
    pub classes: Vec<SpeckleClassSpec>,
    pub images_per_class: usize,
    pub image_size: usize,
    pub laser_wavelength_nm: f64,
    /// Recorded in the manifest only.
    #[serde(default)]
    pub laser_power_mw: Option<f64>,
    pub seed: u64,
}

impl SynthDatasetSpec {
    /// Four speckle textures with spot densities 20/60/140/300 per 10⁴ px.
    pub fn material_fixture(images_per_class: usize, image_size: usize, wavelength_nm: f64, seed: u64) -> Self {
        Self {
            classes: vec![
                SpeckleClassSpec::new("acrylic", 20.0, (1.0, 2.0), 1.0, 0.9, 0.03),
                SpeckleClassSpec::new("cardboard", 60.0, (2.0, 3.0), 2.5, 0.9, 0.03),
                SpeckleClassSpec::new("leather", 140.0, (1.0, 3.0), 1.0, 0.9, 0.03),
                SpeckleClassSpec::new("plywood", 300.0, (3.0, 5.0), 2.0, 0.9, 0.03),
            ],
            images_per_class,
            image_size,
            laser_wavelength_nm: wavelength_nm,
            laser_power_mw: Some(5.0),
            seed,
        }
    }

    /// Two classes: fine speckle versus a few large diffuse smoke blobs.
    pub fn smoke_fixture(images_per_class: usize, image_size: usize, wavelength_nm: f64, seed: u64) -> Self {
        Self {
            classes: vec![
                SpeckleClassSpec::new("no_smoke", 140.0, (1.0, 2.5), 1.2, 0.9, 0.03),
                SpeckleClassSpec::new("smoke", 8.0, (6.0, 12.0), 1.6, 0.6, 0.05),
            ],
            images_per_class,
            image_size,
            laser_wavelength_nm: wavelength_nm,
            laser_power_mw: None,
            seed,
        }
    }

    /// `n` classes: the four material-fixture textures first, then extra
    /// named textures with linearly spaced densities.
    pub fn with_classes(
        n: usize,
        images_per_class: usize,
        image_size: usize,
        wavelength_nm: f64,
        seed: u64,
    ) -> Self {
        let mut spec = Self::material_fixture(images_per_class, image_size, wavelength_nm, seed);
        spec.classes.truncate(n);
        for i in spec.classes.len()..n {
            let name = EXTRA_CLASS_NAMES
                .get(i - 4)
                .map_or_else(|| format!("material_{i:02}"), |s| s.to_string());
            let r = 1.0 + (i % 3) as f64 * 0.5;
            spec.classes.push(SpeckleClassSpec::new(
                &name,
                10.0 + 13.0 * (i - 3) as f64,
                (r, r + 1.0 + (i % 2) as f64),
                1.0 + (i % 4) as f64 * 0.5,
                0.9,
                0.03,
            ));
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::InvalidConfig("a dataset needs at least two classes".into()));
        }
        if self.images_per_class == 0 || self.image_size == 0 {
            return Err(Error::InvalidConfig("counts and sizes must be positive".into()));
        }
        Plane::from_wavelength(self.laser_wavelength_nm)?;
        for (i, a) in self.classes.iter().enumerate() {
            a.validate()?;
            for b in &self.classes[i + 1..] {
                if a.class_name == b.class_name {
                    return Err(Error::InvalidConfig(format!("duplicate class {}", a.class_name)));
                }
                let same = |x: &SpeckleClassSpec| {
                    (x.spot_density, x.spot_radius, x.anisotropy, x.brightness, x.background_noise)
                };
                if same(a) == same(b) {
                    return Err(Error::InvalidConfig(format!(
                        "classes {} and {} share identical parameters",
                        a.class_name, b.class_name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-class image counts for the 70/20/10 train/val/test split.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.7).round() as usize;
    let val = ((n as f64 * 0.2).round() as usize).min(n - train);
    (train, val, n - train - val)
}

pub fn split_of(index: usize, n: usize) -> Split {
    let (train, val, _) = split_counts(n);
    if index < train {
        Split::Train
    } else if index < train + val {
        Split::Val
    } else {
        Split::Test
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    classes: &'a [SpeckleClassSpec],
    images_per_class: usize,
    image_size: usize,
    laser_wavelength_nm: f64,
    laser_power_mw: Option<f64>,
    seed: u64,
    split_counts: SplitCounts,
}

#[derive(Serialize)]
struct SplitCounts {
    train: usize,
    val: usize,
    test: usize,
}

/// Writes `root/<split>/<class>/<index>.ppm` plus `root/dataset.json`.
pub fn generate_dataset(spec: &SynthDatasetSpec, root: impl AsRef<Path>) -> Result<DatasetIndex> {
    spec.validate()?;
    let root = root.as_ref();
    let n = spec.images_per_class;
    for class in &spec.classes {
        for split in Split::ALL {
            let dir = root.join(split.dir_name()).join(&class.class_name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for index in 0..n {
            let img = synth_speckle(class, spec.laser_wavelength_nm, spec.image_size, spec.seed, index as u64)?;
            let path = root
                .join(split_of(index, n).dir_name())
                .join(&class.class_name)
                .join(format!("{index}.ppm"));
            fs::write(&path, pnm::encode(&img)).map_err(|e| Error::io(&path, e))?;
        }
    }
    let (train, val, test) = split_counts(n);
    let manifest = Manifest {
        classes: &spec.classes,
        images_per_class: n,
        image_size: spec.image_size,
        laser_wavelength_nm: spec.laser_wavelength_nm,
        laser_power_mw: spec.laser_power_mw,
        seed: spec.seed,
        split_counts: SplitCounts { train, val, test },
    };
    let path = root.join("dataset.json");
    fs::write(&path, to_stable_string(&manifest)?).map_err(|e| Error::io(&path, e))?;
    DatasetIndex::scan(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class() -> SpeckleClassSpec {
        SpeckleClassSpec::new("leather", 140.0, (1.0, 3.0), 1.0, 0.9, 0.03)
    }

    #[test]
    fn deterministic_images() {
        let a = synth_speckle(&class(), 650.0, 32, 7, 3).unwrap();
        let b = synth_speckle(&class(), 650.0, 32, 7, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_speckle(&class(), 650.0, 32, 7, 4).unwrap());
        assert_ne!(a, synth_speckle(&class(), 650.0, 32, 8, 3).unwrap());
    }

    #[test]
    fn red_laser_dominates_red_plane() {
        let img = synth_speckle(&class(), 650.0, 64, 1, 0).unwrap();
        let (r, g, b) = (img.channel_mean(0), img.channel_mean(1), img.channel_mean(2));
        assert!(r > 10.0 * g && r > 10.0 * b, "means {r} {g} {b}");
        let green = synth_speckle(&class(), 532.0, 64, 1, 0).unwrap();
        assert!(green.channel_mean(1) > 10.0 * green.channel_mean(0));
    }

    #[test]
    fn dark_noiseless_class_is_black() {
        let spec = SpeckleClassSpec::new("void", 50.0, (1.0, 2.0), 1.0, 0.0, 0.0);
        let img = synth_speckle(&spec, 650.0, 16, 0, 0).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn off_laser_planes_stay_dark() {
        let loud = SpeckleClassSpec::new("loud", 300.0, (3.0, 5.0), 2.0, 1.0, 0.5);
        let img = synth_speckle(&loud, 650.0, 48, 2, 0).unwrap();
        for px in img.pixels().chunks(3) {
            assert!(px[1] as f64 <= 0.2 * 255.0 && px[2] as f64 <= 0.2 * 255.0);
        }
    }

    #[test]
    fn out_of_range_wavelength() {
        assert!(matches!(
            synth_speckle(&class(), 900.0, 8, 0, 0),
            Err(Error::WavelengthOutOfRange(_))
        ));
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_counts(60), (42, 12, 6));
        assert_eq!(split_counts(10), (7, 2, 1));
        assert_eq!(split_counts(1), (1, 0, 0));
        assert_eq!(split_of(41, 60), Split::Train);
        assert_eq!(split_of(42, 60), Split::Val);
        assert_eq!(split_of(54, 60), Split::Test);
    }

    #[test]
    fn dataset_spec_validation() {
        let mut spec = SynthDatasetSpec::material_fixture(10, 16, 650.0, 0);
        assert!(spec.validate().is_ok());
        spec.classes[1] = SpeckleClassSpec { class_name: "dup".into(), ..spec.classes[0].clone() };
        assert!(spec.validate().is_err());
        let mut spec = SynthDatasetSpec::material_fixture(10, 16, 650.0, 0);
        spec.classes.truncate(1);
        assert!(spec.validate().is_err());
        let spec = SynthDatasetSpec::material_fixture(10, 16, 200.0, 0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn class_count_builder() {
        assert_eq!(
            SynthDatasetSpec::with_classes(4, 5, 16, 650.0, 1),
            SynthDatasetSpec::material_fixture(5, 16, 650.0, 1)
        );
        assert_eq!(SynthDatasetSpec::with_classes(2, 5, 16, 650.0, 1).classes.len(), 2);
        let big = SynthDatasetSpec::with_classes(30, 5, 16, 650.0, 1);
        assert!(big.validate().is_ok());
        assert!(big.classes.iter().all(|c| c.spot_density <= 400.0));
        assert_eq!(big.classes[29].class_name, "material_29");
    }
}
