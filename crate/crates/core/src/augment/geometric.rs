use serde::{Deserialize, Serialize};

use super::sampling::{warp_chain, Stage};
use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometricOp {
    FlipH,
    FlipV,
    /// Rotation about the image center, degrees.
    Rotate(f64),
    /// Zoom about the image center.
    Scale(f64),
}

/// Snaps values within rounding noise of 0 or +-1 so right-angle
/// rotations map pixels onto pixels exactly.
fn snap(v: f64) -> f64 {
    for t in [-1.0, 0.0, 1.0] {
        if (v - t).abs() < 1e-12 {
            return t;
        }
    }
    v
}

impl GeometricOp {
    /// Inverse map of the op on a `w x h` frame, about the frame center.
    pub(crate) fn stage(self, w: usize, h: usize) -> Result<Stage> {
        let c = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let a = match self {
            GeometricOp::FlipH => [-1.0, 0.0, 0.0, 1.0],
            GeometricOp::FlipV => [1.0, 0.0, 0.0, -1.0],
            GeometricOp::Rotate(deg) => {
                if !deg.is_finite() {
                    return Err(Error::param("rotation angle must be finite"));
                }
                let rad = deg.to_radians();
                let (s, co) = (snap(rad.sin()), snap(rad.cos()));
                [co, s, -s, co]
            }
            GeometricOp::Scale(k) => {
                if !(k > 0.0 && k.is_finite()) {
                    return Err(Error::param("scale must be > 0"));
                }
                [1.0 / k, 0.0, 0.0, 1.0 / k]
            }
        };
        Ok(Stage::Affine { a, c })
    }
}

/// Applies `op` to an image/mask pair. Output keeps the input size:
/// rotations and zooms crop or zero-pad about the center.
pub fn geometric_pair<T: Real>(
    image: &Raster<T>,
    mask: &Mask,
    op: GeometricOp,
) -> Result<(Raster<T>, Mask)> {
    image.ensure_same_dims(mask)?;
    match op {
        GeometricOp::FlipH => Ok((image.flip_horizontal(), mask.flip_horizontal())),
        GeometricOp::FlipV => Ok((image.flip_vertical(), mask.flip_vertical())),
        _ => {
            let stage = op.stage(image.width(), image.height())?;
            Ok(warp_chain(image, mask, &[stage]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(w: usize, h: usize) -> (Raster<f64>, Mask) {
        let mask = Mask::from_fn(w, h, 1, |x, y, _| ((x * 3 + y * 5) % 7 < 2) as u8);
        let img = Raster::from_fn(w, h, 3, |x, y, c| ((x + 2 * y + c) % 9) as f64 / 9.0);
        (img, mask)
    }

    #[test]
    fn double_flip_is_identity() {
        let (img, mask) = pair(13, 8);
        let (a, am) = geometric_pair(&img, &mask, GeometricOp::FlipH).unwrap();
        assert_ne!(a, img);
        let (b, bm) = geometric_pair(&a, &am, GeometricOp::FlipH).unwrap();
        assert_eq!((b, bm), (img, mask));
    }

    #[test]
    fn zero_rotation_and_unit_scale_are_identity() {
        let (img, mask) = pair(11, 9);
        assert_eq!(geometric_pair(&img, &mask, GeometricOp::Rotate(0.0)).unwrap(), (img.clone(), mask.clone()));
        assert_eq!(geometric_pair(&img, &mask, GeometricOp::Scale(1.0)).unwrap(), (img, mask));
    }

    #[test]
    fn right_angle_rotation_is_lossless_on_squares() {
        for n in [8, 9] {
            let (img, mask) = pair(n, n);
            let (r, rm) = geometric_pair(&img, &mask, GeometricOp::Rotate(90.0)).unwrap();
            assert_eq!(rm.count_ones(), mask.count_ones());
            let mut back = (r, rm);
            for _ in 0..3 {
                back = geometric_pair(&back.0, &back.1, GeometricOp::Rotate(90.0)).unwrap();
            }
            assert_eq!(back, (img, mask));
        }
    }

    #[test]
    fn rejects_non_positive_scale() {
        let (img, mask) = pair(4, 4);
        assert!(geometric_pair(&img, &mask, GeometricOp::Scale(0.0)).is_err());
        assert!(geometric_pair(&img, &mask, GeometricOp::Scale(-2.0)).is_err());
        assert!(geometric_pair(&img, &mask.crop(0, 0, 3, 4).unwrap(), GeometricOp::FlipH).is_err());
    }
}
