//! Resampling and separable filtering shared by the transforms.

use crate::raster::{Mask, Raster};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Border {
    Zero,
    Replicate,
}

/// Bilinear sample of channel `c` at continuous pixel coordinates.
#[inline]
pub(crate) fn bilinear<T: Real>(img: &Raster<T>, sx: f64, sy: f64, c: usize, border: Border) -> T {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let tap = |x: isize, y: isize| -> f64 {
        if x >= 0 && y >= 0 && x < w && y < h {
            img.get(x as usize, y as usize, c).as_f64()
        } else {
            match border {
                Border::Zero => 0.0,
                Border::Replicate => img.get_clamped(x, y, c).as_f64(),
            }
        }
    };
    if fx == 0.0 && fy == 0.0 {
        return T::lit(tap(x0, y0));
    }
    let top = tap(x0, y0) * (1.0 - fx) + tap(x0 + 1, y0) * fx;
    let bot = tap(x0, y0 + 1) * (1.0 - fx) + tap(x0 + 1, y0 + 1) * fx;
    T::lit(top * (1.0 - fy) + bot * fy)
}

#[inline]
pub(crate) fn nearest(mask: &Mask, sx: f64, sy: f64, border: Border) -> u8 {
    let (x, y) = (sx.round() as isize, sy.round() as isize);
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    if x >= 0 && y >= 0 && x < w && y < h {
        mask.get(x as usize, y as usize, 0)
    } else {
        match border {
            Border::Zero => 0,
            Border::Replicate => mask.get_clamped(x, y, 0),
        }
    }
}

/// One coordinate transform of a warp chain, stored as its inverse map
/// (output pixel -> input pixel).
#[derive(Clone, Debug)]
pub(crate) enum Stage {
    /// `src = a * (dst - c) + c`, out-of-range samples read zero.
    Affine { a: [f64; 4], c: (f64, f64) },
    /// `src = dst + (dx, dy)`, out-of-range samples replicate the border.
    Displace { dx: Vec<f64>, dy: Vec<f64>, w: usize },
}

impl Stage {
    fn border(&self) -> Border {
        match self {
            Stage::Affine { .. } => Border::Zero,
            Stage::Displace { .. } => Border::Replicate,
        }
    }

    fn field(v: &[f64], w: usize, x: f64, y: f64) -> f64 {
        let h = v.len() / w;
        let xi = (x.round().max(0.0) as usize).min(w - 1);
        let yi = (y.round().max(0.0) as usize).min(h - 1);
        v[yi * w + xi]
    }

    #[inline]
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Stage::Affine { a, c } => {
                let (dx, dy) = (x - c.0, y - c.1);
                (c.0 + a[0] * dx + a[1] * dy, c.1 + a[2] * dx + a[3] * dy)
            }
            Stage::Displace { dx, dy, w } => {
                (x + Self::field(dx, *w, x, y), y + Self::field(dy, *w, x, y))
            }
        }
    }
}

/// Resamples image (bilinear) and mask (nearest) once through the
/// composition of `stages`, given in application order. Intermediate
/// coordinates leaving the frame read zero or clamp, following the border
/// rule of the stage that would have sampled them.
pub(crate) fn warp_chain<T: Real>(image: &Raster<T>, mask: &Mask, stages: &[Stage]) -> (Raster<T>, Mask) {
    let (w, h) = image.dims();
    let ch = image.channels();
    let (wf, hf) = (w as f64, h as f64);
    let border = stages.first().map_or(Border::Zero, Stage::border);
    let mut out = Raster::filled(w, h, ch, T::zero());
    let mut out_mask = Mask::filled(w, h, 1, 0);
    for y in 0..h {
        for x in 0..w {
            let mut p = (x as f64, y as f64);
            for (k, stage) in stages.iter().enumerate().rev() {
                p = stage.apply(p.0, p.1);
                if k == 0 {
                    break;
                }
                match stages[k].border() {
                    Border::Zero => {
                        if p.0 < -0.5 || p.1 < -0.5 || p.0 >= wf - 0.5 || p.1 >= hf - 0.5 {
                            p = (f64::NAN, f64::NAN);
                            break;
                        }
                    }
                    Border::Replicate => p = (p.0.clamp(0.0, wf - 1.0), p.1.clamp(0.0, hf - 1.0)),
                }
            }
            if p.0.is_nan() {
                continue;
            }
            for c in 0..ch {
                out.set(x, y, c, bilinear(image, p.0, p.1, c, border));
            }
            out_mask.set(x, y, 0, (nearest(mask, p.0, p.1, border) != 0) as u8);
        }
    }
    (out, out_mask)
}

/// Normalized Gaussian taps over `[-ceil(3 sigma), ceil(3 sigma)]`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable convolution of every channel with border replication.
pub(crate) fn convolve_separable(data: &[f64], w: usize, h: usize, ch: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let idx = |x: usize, y: usize, c: usize| (y * w + x) * ch + c;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += kv * data[idx(sx, y, c)];
                }
                tmp[idx(x, y, c)] = acc;
            }
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[idx(x, sy, c)];
                }
                out[idx(x, y, c)] = acc;
            }
        }
    }
    out
}

pub(crate) fn gaussian_blur<T: Real>(img: &Raster<T>, sigma: f64) -> Raster<T> {
    let data: Vec<f64> = img.data().iter().map(|v| v.as_f64()).collect();
    let out = convolve_separable(&data, img.width(), img.height(), img.channels(), &gaussian_kernel(sigma));
    Raster::from_vec(img.width(), img.height(), img.channels(), out.into_iter().map(T::lit).collect())
        .expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for sigma in [0.3, 1.0, 2.5, 6.0] {
            let k = gaussian_kernel(sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(k.len() % 2, 1);
            for i in 0..k.len() / 2 {
                assert_eq!(k[i], k[k.len() - 1 - i]);
            }
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Raster::filled(9, 7, 3, 0.25f64);
        let b = gaussian_blur(&img, 1.5);
        assert!(b.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn bilinear_interpolates_between_taps() {
        let img = Raster::from_vec(2, 1, 1, vec![0.0f64, 1.0]).unwrap();
        assert_eq!(bilinear(&img, 0.25, 0.0, 0, Border::Replicate), 0.25);
        assert_eq!(bilinear(&img, 1.0, 0.0, 0, Border::Zero), 1.0);
        assert_eq!(bilinear(&img, 1.5, 0.0, 0, Border::Zero), 0.5);
        assert_eq!(bilinear(&img, 1.5, 0.0, 0, Border::Replicate), 1.0);
    }
}
