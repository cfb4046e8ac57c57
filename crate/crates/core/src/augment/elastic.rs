use rand::Rng as _;

use super::sampling::{convolve_separable, gaussian_kernel, warp_chain, Stage};
use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::rng;
use crate::scalar::Real;

/// Displacement fields `(dx, dy)` for a `w x h` frame: per-pixel
/// uniform(-1, 1) draws smoothed by a Gaussian of std `sigma`, times `alpha`.
pub(crate) fn elastic_stage(w: usize, h: usize, alpha: f64, sigma: f64, seed: u64) -> Result<Stage> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param("elastic alpha must be >= 0"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("elastic sigma must be > 0"));
    }
    let mut g = rng::rng_from(rng::mix(seed, rng::stream::ELASTIC));
    let kernel = gaussian_kernel(sigma);
    let mut field = || {
        let raw: Vec<f64> = (0..w * h).map(|_| g.random_range(-1.0..1.0)).collect();
        let mut f = convolve_separable(&raw, w, h, 1, &kernel);
        f.iter_mut().for_each(|v| *v *= alpha);
        f
    };
    let (dx, dy) = (field(), field());
    Ok(Stage::Displace { dx, dy, w })
}

/// Smooth random displacement warp. Samples falling outside the image
/// replicate the border.
pub fn elastic_pair<T: Real>(
    image: &Raster<T>,
    mask: &Mask,
    alpha: f64,
    sigma: f64,
    seed: u64,
) -> Result<(Raster<T>, Mask)> {
    image.ensure_same_dims(mask)?;
    let stage = elastic_stage(image.width(), image.height(), alpha, sigma, seed)?;
    Ok(warp_chain(image, mask, &[stage]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diagonal(n: usize) -> (Raster<f32>, Mask) {
        let mask = Mask::from_fn(n, n, 1, |x, y, _| ((x as isize - y as isize).abs() <= 1) as u8);
        let img = Raster::from_fn(n, n, 3, |x, y, _| if mask.get(x, y, 0) == 1 { 0.2 } else { 0.6 });
        (img, mask)
    }

    #[test]
    fn zero_alpha_is_identity() {
        let (img, mask) = diagonal(40);
        assert_eq!(elastic_pair(&img, &mask, 0.0, 4.0, 9).unwrap(), (img, mask));
    }

    #[test]
    fn warp_keeps_thin_crack_area() {
        let (img, mask) = diagonal(96);
        let before = mask.count_ones() as f64;
        for seed in 0..20 {
            let (_, m) = elastic_pair(&img, &mask, 30.0, 6.0, seed).unwrap();
            assert!(m.is_binary());
            let ratio = m.count_ones() as f64 / before;
            assert!((0.75..=1.25).contains(&ratio), "seed {seed}: {ratio}");
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let (img, mask) = diagonal(24);
        assert_eq!(
            elastic_pair(&img, &mask, 10.0, 3.0, 1).unwrap(),
            elastic_pair(&img, &mask, 10.0, 3.0, 1).unwrap()
        );
        assert!(elastic_pair(&img, &mask, -1.0, 3.0, 1).is_err());
        assert!(elastic_pair(&img, &mask, 1.0, 0.0, 1).is_err());
    }
}
