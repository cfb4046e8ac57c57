use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sampling::gaussian_blur;
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::Real;

/// Unsharp mask: `v + amount * (v - blur_sigma(v))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sharpen {
    pub amount: f64,
    pub sigma: f64,
}

/// Concrete photometric parameters. `Default` is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotometricParams {
    pub brightness: f64,
    pub contrast: f64,
    pub gamma: f64,
    pub hue_deg: f64,
    pub sharpen: Option<Sharpen>,
    pub blur_sigma: Option<f64>,
}

impl Default for PhotometricParams {
    fn default() -> Self {
        PhotometricParams {
            brightness: 0.0,
            contrast: 1.0,
            gamma: 1.0,
            hue_deg: 0.0,
            sharpen: None,
            blur_sigma: None,
        }
    }
}

impl PhotometricParams {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Brightness, contrast about the global mean, gamma, HSV hue rotation,
/// unsharp sharpening and Gaussian blur, in that order. Output is clamped
/// to [0, 1]. Hue rotation needs 3 channels and is skipped otherwise.
pub fn photometric<T: Real>(image: &Raster<T>, params: &PhotometricParams) -> Raster<T> {
    let mut out = image.clone();
    if params.brightness != 0.0 {
        let b = T::lit(params.brightness);
        out.data_mut().iter_mut().for_each(|v| *v = *v + b);
    }
    if params.contrast != 1.0 {
        let mean = out.mean();
        let c = T::lit(params.contrast);
        out.data_mut().iter_mut().for_each(|v| *v = mean + c * (*v - mean));
    }
    out.clamp01();
    if params.gamma != 1.0 {
        let g = T::lit(params.gamma);
        out.data_mut().iter_mut().for_each(|v| *v = v.powf(g));
    }
    if params.hue_deg != 0.0 && out.channels() == 3 {
        for px in out.data_mut().chunks_exact_mut(3) {
            let (h, s, v) = rgb_to_hsv(px[0].as_f64(), px[1].as_f64(), px[2].as_f64());
            let (r, g, b) = hsv_to_rgb(h + params.hue_deg, s, v);
            px[0] = T::lit(r);
            px[1] = T::lit(g);
            px[2] = T::lit(b);
        }
    }
    if let Some(sh) = params.sharpen.filter(|s| s.amount != 0.0 && s.sigma > 0.0) {
        let blurred = gaussian_blur(&out, sh.sigma);
        let a = T::lit(sh.amount);
        for (v, b) in out.data_mut().iter_mut().zip(blurred.data()) {
            *v = *v + a * (*v - *b);
        }
    }
    if let Some(sigma) = params.blur_sigma.filter(|s| *s > 0.0) {
        out = gaussian_blur(&out, sigma);
    }
    out.clamp01();
    out
}

/// Normalized line kernel of `length` taps through the origin, as
/// `(dx, dy) -> weight`. Taps landing on the same pixel accumulate.
fn line_kernel(length: usize, angle_rad: f64) -> BTreeMap<(isize, isize), f64> {
    let (s, c) = angle_rad.sin_cos();
    let half = (length as f64 - 1.0) / 2.0;
    let w = 1.0 / length as f64;
    let mut k = BTreeMap::new();
    for i in 0..length {
        let t = i as f64 - half;
        *k.entry(((t * c).round() as isize, (t * s).round() as isize)).or_insert(0.0) += w;
    }
    k
}

/// Convolves with a 1-px-thick line of `length` pixels at `angle_rad`
/// (0 = horizontal), replicating the border.
pub fn motion_blur<T: Real>(image: &Raster<T>, length: usize, angle_rad: f64) -> Result<Raster<T>> {
    if length == 0 {
        return Err(Error::param("motion blur length must be >= 1"));
    }
    if !angle_rad.is_finite() {
        return Err(Error::param("motion blur angle must be finite"));
    }
    if length == 1 {
        return Ok(image.clone());
    }
    let taps: Vec<_> = line_kernel(length, angle_rad).into_iter().collect();
    let (w, h) = image.dims();
    let ch = image.channels();
    Ok(Raster::from_fn(w, h, ch, |x, y, c| {
        let acc: f64 = taps
            .iter()
            .map(|&((dx, dy), wt)| wt * image.get_clamped(x as isize + dx, y as isize + dy, c).as_f64())
            .sum();
        T::lit(acc)
    }))
}
