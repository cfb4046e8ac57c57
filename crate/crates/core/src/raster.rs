//! Dense row-major rasters with interleaved channels.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

/// Binary raster with values in {0, 1}.
pub type Mask = Raster<u8>;

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::Data(format!(
                "buffer of {} values does not fit {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a raster by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Raster {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(width, height)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let o = self.offset(x, y) + c;
        self.data[o] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [T] {
        let o = self.offset(x, y);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    /// Sample with coordinates clamped into the raster (border replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_dims<U: Copy>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimensions {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Copies the window `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::param(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = self.offset(x0, y);
            data.extend_from_slice(&self.data[start..start + w * self.channels]);
        }
        Ok(Raster {
            width: w,
            height: h,
            channels: self.channels,
            data,
        })
    }

    /// Extends the raster to `w x h` on the right and bottom. `None` replicates
    /// the nearest edge sample; `Some(v)` fills with a constant.
    pub fn pad_to(&self, w: usize, h: usize, fill: Option<T>) -> Self {
        assert!(w >= self.width && h >= self.height);
        Raster::from_fn(w, h, self.channels, |x, y, c| {
            if x < self.width && y < self.height {
                self.get(x, y, c)
            } else if let Some(v) = fill {
                v
            } else {
                self.get(x.min(self.width - 1), y.min(self.height - 1), c)
            }
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        Raster::from_fn(self.width, self.height, self.channels, |x, y, c| {
            self.get(self.width - 1 - x, y, c)
        })
    }

    pub fn flip_vertical(&self) -> Self {
        Raster::from_fn(self.width, self.height, self.channels, |x, y, c| {
            self.get(x, self.height - 1 - y, c)
        })
    }
}

impl<T: Real> Raster<T> {
    /// Rec. 709 luma for 3-channel rasters; identity for 1-channel ones.
    pub fn luminance(&self) -> Raster<T> {
        match self.channels {
            1 => self.clone(),
            3 => {
                let (wr, wg, wb) = (T::lit(0.2126), T::lit(0.7152), T::lit(0.0722));
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
                    .collect();
                Raster {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    data,
                }
            }
            n => panic!("luminance of a {n}-channel raster"),
        }
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        let s: f64 = self.data.iter().map(|v| v.as_f64()).sum();
        T::lit(s / self.data.len() as f64)
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.max(T::zero()).min(T::one());
        }
    }

    /// Converts a binary mask into a single-channel {0, 1} float raster.
    pub fn from_mask(mask: &Mask) -> Self {
        mask.map(|v| if v != 0 { T::one() } else { T::zero() })
    }
}

impl Mask {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    /// Pixel-wise OR into `self` at offset `(x0, y0)`.
    pub fn union_at(&mut self, other: &Mask, x0: usize, y0: usize) {
        for y in 0..other.height {
            for x in 0..other.width {
                if other.get(x, y, 0) != 0 {
                    self.set(x0 + x, y0 + y, 0, 1);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_pad_preserve_region() {
        let r = Raster::from_fn(5, 4, 2, |x, y, c| (x * 100 + y * 10 + c) as f32);
        let p = r.pad_to(8, 6, None);
        assert_eq!(p.crop(0, 0, 5, 4).unwrap(), r);
        assert_eq!(p.get(7, 5, 1), r.get(4, 3, 1));
        let z = r.pad_to(8, 6, Some(-1.0));
        assert_eq!(z.get(6, 1, 0), -1.0);
        assert!(r.crop(1, 1, 5, 1).is_err());
    }

    #[test]
    fn flips_are_involutions() {
        let r = Raster::from_fn(7, 3, 3, |x, y, c| (x ^ (y * 3) ^ c) as u8);
        assert_eq!(r.flip_horizontal().flip_horizontal(), r);
        assert_eq!(r.flip_vertical().flip_vertical(), r);
        assert_ne!(r.flip_horizontal(), r);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Raster::from_vec(2, 2, 1, vec![0u8; 3]).is_err());
        assert!(Raster::from_vec(2, 2, 1, vec![0u8; 4]).is_ok());
    }
}
