//! Joint image/mask augmentation.
//!
//! Geometric and elastic transforms warp image and mask through the same
//! coordinate map (bilinear for the image, nearest for the mask).
//! Photometric transforms and motion blur touch the image only.

mod dataset;
mod elastic;
mod geometric;
mod photometric;
mod sampling;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::rng;
use crate::scalar::Real;
use crate::scene::Sample;

pub use dataset::{augment_dataset, DatasetAugment};
pub use elastic::elastic_pair;
pub use geometric::{geometric_pair, GeometricOp};
pub use photometric::{motion_blur, photometric, PhotometricParams, Sharpen};

/// How per-sample seeds are derived when augmenting a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// `mix(seed, index)` for sample `index`.
    #[default]
    PerSample,
    /// Every sample uses the master seed.
    Shared,
}

impl SeedPolicy {
    pub fn seed_for(self, master: u64, index: usize) -> u64 {
        match self {
            SeedPolicy::PerSample => rng::mix(master, index as u64),
            SeedPolicy::Shared => master,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub p_flip_h: f64,
    pub p_flip_v: f64,
    pub p_rotate: f64,
    pub rotate_deg: (f64, f64),
    pub p_scale: f64,
    pub scale: (f64, f64),
    pub p_elastic: f64,
    pub elastic_alpha: (f64, f64),
    pub elastic_sigma: (f64, f64),
    pub p_brightness: f64,
    pub brightness: (f64, f64),
    pub p_contrast: f64,
    pub contrast: (f64, f64),
    pub p_gamma: f64,
    pub gamma: (f64, f64),
    pub p_hue: f64,
    pub hue_deg: (f64, f64),
    pub p_sharpen: f64,
    pub sharpen_amount: (f64, f64),
    pub sharpen_sigma: (f64, f64),
    pub p_blur: f64,
    pub blur_sigma: (f64, f64),
    pub p_motion_blur: f64,
    pub motion_length_px: (usize, usize),
    pub motion_angle_deg: (f64, f64),
    pub seed_policy: SeedPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_flip_h: 0.5,
            p_flip_v: 0.5,
            p_rotate: 0.5,
            rotate_deg: (-30.0, 30.0),
            p_scale: 0.3,
            scale: (0.8, 1.25),
            p_elastic: 0.3,
            elastic_alpha: (10.0, 34.0),
            elastic_sigma: (4.0, 6.0),
            p_brightness: 0.5,
            brightness: (-0.1, 0.1),
            p_contrast: 0.5,
            contrast: (0.8, 1.2),
            p_gamma: 0.5,
            gamma: (0.8, 1.25),
            p_hue: 0.3,
            hue_deg: (-18.0, 18.0),
            p_sharpen: 0.2,
            sharpen_amount: (0.3, 1.0),
            sharpen_sigma: (0.8, 1.5),
            p_blur: 0.2,
            blur_sigma: (0.5, 1.5),
            p_motion_blur: 0.3,
            motion_length_px: (3, 15),
            motion_angle_deg: (0.0, 180.0),
            seed_policy: SeedPolicy::PerSample,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::param(format!("{name}: range must be finite with lo <= hi")));
    }
    Ok(())
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn disabled() -> Self {
        AugmentConfig {
            p_flip_h: 0.0,
            p_flip_v: 0.0,
            p_rotate: 0.0,
            p_scale: 0.0,
            p_elastic: 0.0,
            p_brightness: 0.0,
            p_contrast: 0.0,
            p_gamma: 0.0,
            p_hue: 0.0,
            p_sharpen: 0.0,
            p_blur: 0.0,
            p_motion_blur: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_flip_h", self.p_flip_h),
            ("p_flip_v", self.p_flip_v),
            ("p_rotate", self.p_rotate),
            ("p_scale", self.p_scale),
            ("p_elastic", self.p_elastic),
            ("p_brightness", self.p_brightness),
            ("p_contrast", self.p_contrast),
            ("p_gamma", self.p_gamma),
            ("p_hue", self.p_hue),
            ("p_sharpen", self.p_sharpen),
            ("p_blur", self.p_blur),
            ("p_motion_blur", self.p_motion_blur),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        let ranges = [
            ("rotate_deg", self.rotate_deg),
            ("scale", self.scale),
            ("elastic_alpha", self.elastic_alpha),
            ("elastic_sigma", self.elastic_sigma),
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("gamma", self.gamma),
            ("hue_deg", self.hue_deg),
            ("sharpen_amount", self.sharpen_amount),
            ("sharpen_sigma", self.sharpen_sigma),
            ("blur_sigma", self.blur_sigma),
            ("motion_angle_deg", self.motion_angle_deg),
        ];
        for (name, r) in ranges {
            check_range(name, r)?;
        }
        if self.scale.0 <= 0.0 {
            return Err(Error::param("scale range must be positive"));
        }
        if self.elastic_alpha.0 < 0.0 {
            return Err(Error::param("elastic_alpha must be >= 0"));
        }
        for (name, r) in [
            ("elastic_sigma", self.elastic_sigma),
            ("sharpen_sigma", self.sharpen_sigma),
            ("blur_sigma", self.blur_sigma),
            ("gamma", self.gamma),
        ] {
            if r.0 <= 0.0 {
                return Err(Error::param(format!("{name} must be > 0")));
            }
        }
        if self.contrast.0 < 0.0 || self.sharpen_amount.0 < 0.0 {
            return Err(Error::param("contrast and sharpen_amount must be >= 0"));
        }
        let (lo, hi) = self.motion_length_px;
        if lo == 0 || lo > hi {
            return Err(Error::param("motion_length_px must satisfy 1 <= lo <= hi"));
        }
        Ok(())
    }
}

fn uniform(g: &mut rng::Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        g.random_range(lo..hi)
    }
}

fn gate(g: &mut rng::Rng, p: f64) -> bool {
    g.random::<f64>() < p
}

/// Runs geometric -> elastic -> photometric -> motion blur, each stage
/// gated by its probability. Deterministic in `(image, mask, config, seed)`.
pub fn augment_pair<T: Real>(
    image: &Raster<T>,
    mask: &Mask,
    config: &AugmentConfig,
    seed: u64,
) -> Result<(Raster<T>, Mask)> {
    config.validate()?;
    image.ensure_same_dims(mask)?;
    let mut g = rng::rng_from(rng::mix(seed, rng::stream::AUGMENT));
    let (mut img, mut m) = (image.clone(), mask.clone());

    let mut ops = Vec::new();
    if gate(&mut g, config.p_flip_h) {
        ops.push(GeometricOp::FlipH);
    }
    if gate(&mut g, config.p_flip_v) {
        ops.push(GeometricOp::FlipV);
    }
    if gate(&mut g, config.p_rotate) {
        ops.push(GeometricOp::Rotate(uniform(&mut g, config.rotate_deg)));
    }
    if gate(&mut g, config.p_scale) {
        ops.push(GeometricOp::Scale(uniform(&mut g, config.scale)));
    }
    let (w, h) = image.dims();
    let mut stages = ops
        .into_iter()
        .map(|op| op.stage(w, h))
        .collect::<Result<Vec<_>>>()?;
    if gate(&mut g, config.p_elastic) {
        let alpha = uniform(&mut g, config.elastic_alpha);
        let sigma = uniform(&mut g, config.elastic_sigma);
        stages.push(elastic::elastic_stage(w, h, alpha, sigma, g.random())?);
    }
    // one resampling for the whole chain keeps image and mask aligned
    if !stages.is_empty() {
        (img, m) = sampling::warp_chain(&img, &m, &stages);
    }

    let mut params = PhotometricParams::default();
    if gate(&mut g, config.p_brightness) {
        params.brightness = uniform(&mut g, config.brightness);
    }
    if gate(&mut g, config.p_contrast) {
        params.contrast = uniform(&mut g, config.contrast);
    }
    if gate(&mut g, config.p_gamma) {
        params.gamma = uniform(&mut g, config.gamma);
    }
    if gate(&mut g, config.p_hue) {
        params.hue_deg = uniform(&mut g, config.hue_deg);
    }
    if gate(&mut g, config.p_sharpen) {
        params.sharpen = Some(Sharpen {
            amount: uniform(&mut g, config.sharpen_amount),
            sigma: uniform(&mut g, config.sharpen_sigma),
        });
    }
    if gate(&mut g, config.p_blur) {
        params.blur_sigma = Some(uniform(&mut g, config.blur_sigma));
    }
    if !params.is_identity() {
        img = photometric(&img, &params);
    }

    if gate(&mut g, config.p_motion_blur) {
        let (lo, hi) = config.motion_length_px;
        let length = g.random_range(lo..=hi);
        let angle = uniform(&mut g, config.motion_angle_deg).to_radians();
        img = motion_blur(&img, length, angle)?;
    }
    Ok((img, m))
}

fn rewrap(sample: &Sample, image: Raster<f32>, mask: Mask) -> Sample {
    let mut out = Sample::from_parts(image, mask);
    out.meta = sample.meta.clone();
    out.warnings = sample.warnings.clone();
    out.refresh_fraction();
    out
}

/// [`geometric_pair`] on a sample. Crack skeletons are dropped since they
/// no longer match the warped mask.
pub fn geometric(sample: &Sample, op: GeometricOp) -> Result<Sample> {
    let (img, mask) = geometric_pair(&sample.image, &sample.mask, op)?;
    Ok(rewrap(sample, img, mask))
}

pub fn elastic(sample: &Sample, alpha: f64, sigma: f64, seed: u64) -> Result<Sample> {
    let (img, mask) = elastic_pair(&sample.image, &sample.mask, alpha, sigma, seed)?;
    Ok(rewrap(sample, img, mask))
}

pub fn augment_pipeline(sample: &Sample, config: &AugmentConfig, seed: u64) -> Result<Sample> {
    let (img, mask) = augment_pair(&sample.image, &sample.mask, config, seed)?;
    if img == sample.image && mask == sample.mask {
        return Ok(sample.clone());
    }
    Ok(rewrap(sample, img, mask))
}
