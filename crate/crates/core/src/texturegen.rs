//! Concrete tile textures and per-defect texture triplets.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::rng::{self, splitmix64};
use crate::scalar::Real;

const OCTAVES: usize = 3;
const PERSISTENCE: f64 = 0.5;
/// Lattice cells along a tile edge at the coarsest octave.
const BASE_CELLS: usize = 8;
/// Albedo multiplier applied to joint (seam) pixels.
const JOINT_SHADE: f64 = 0.6;
/// Depth of the crack relief, in pixels.
const DEPTH_CLAMP_PX: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileSpec {
    pub size_m: f64,
    pub resolution_px: usize,
    pub base_gray: f64,
    pub noise_amplitude: f64,
    pub joint_width_m: f64,
    pub seed: u64,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            size_m: 5.0,
            resolution_px: 500,
            base_gray: 0.55,
            noise_amplitude: 0.08,
            joint_width_m: 0.02,
            seed: 0,
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.size_m > 0.0) {
            return Err(Error::param("tile size_m must be > 0"));
        }
        if self.resolution_px < 16 {
            return Err(Error::param("tile resolution_px must be >= 16"));
        }
        if !(self.base_gray > 0.0 && self.base_gray < 1.0) {
            return Err(Error::param("tile base_gray must be in (0, 1)"));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::param("tile noise_amplitude must be >= 0"));
        }
        if !(self.joint_width_m >= 0.0) {
            return Err(Error::param("tile joint_width_m must be >= 0"));
        }
        Ok(())
    }

    /// Width of the seam band in pixels.
    pub fn joint_px(&self) -> f64 {
        self.joint_width_m / self.size_m * self.resolution_px as f64
    }
}

/// Lattice value in [-1, 1) hashed from the seed, octave and cell.
fn lattice(seed: u64, octave: usize, ix: usize, iy: usize) -> f64 {
    let h = splitmix64(seed ^ splitmix64(((octave as u64) << 48) ^ ((iy as u64) << 24) ^ ix as u64));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Standard deviation of the octave sum, averaged over positions: lattice
/// variance 1/3, times E[(1-s)^2 + s^2]^2 = (26/35)^2 for smoothstep weights,
/// times the sum of squared octave amplitudes.
fn fractal_std() -> f64 {
    let amp2: f64 = (0..OCTAVES).map(|o| PERSISTENCE.powi(2 * o as i32)).sum();
    (amp2 * (26.0f64 / 35.0).powi(2) / 3.0).sqrt()
}

/// Octave value noise over a `res x res` grid, normalized to unit variance.
fn value_noise(seed: u64, res: usize) -> Vec<f64> {
    let mut out = vec![0.0; res * res];
    let norm = fractal_std();
    for o in 0..OCTAVES {
        let cells = BASE_CELLS << o;
        let amp = PERSISTENCE.powi(o as i32) / norm;
        let grid: Vec<f64> = (0..=cells)
            .flat_map(|iy| (0..=cells).map(move |ix| lattice(seed, o, ix, iy)))
            .collect();
        let g = |ix: usize, iy: usize| grid[iy * (cells + 1) + ix];
        let scale = cells as f64 / res as f64;
        // Per-column cell index and weight are shared by every row.
        let cols: Vec<(usize, f64)> = (0..res)
            .map(|x| {
                let u = (x as f64 + 0.5) * scale;
                let i = (u.floor() as usize).min(cells - 1);
                (i, smoothstep(u - i as f64))
            })
            .collect();
        for y in 0..res {
            let v = (y as f64 + 0.5) * scale;
            let j = (v.floor() as usize).min(cells - 1);
            let sy = smoothstep(v - j as f64);
            let row = &mut out[y * res..(y + 1) * res];
            for (x, &(i, sx)) in cols.iter().enumerate() {
                let top = g(i, j) + sx * (g(i + 1, j) - g(i, j));
                let bot = g(i, j + 1) + sx * (g(i + 1, j + 1) - g(i, j + 1));
                row[x] += amp * (top + sy * (bot - top));
            }
        }
    }
    out
}

/// Gray concrete tile (3 equal channels) with darkened joints at its border.
pub fn synthesize_tile<T: Real>(spec: &TileSpec) -> Result<Raster<T>> {
    spec.validate()?;
    let res = spec.resolution_px;
    let noise = if spec.noise_amplitude > 0.0 {
        value_noise(rng::mix(spec.seed, rng::stream::TILE), res)
    } else {
        vec![0.0; res * res]
    };
    let joint = spec.joint_px();
    Ok(Raster::from_fn(res, res, 3, |x, y, _| {
        let mut v = spec.base_gray * (1.0 + spec.noise_amplitude * noise[y * res + x]);
        let edge = (x.min(res - 1 - x).min(y).min(res - 1 - y)) as f64;
        if edge + 0.5 <= joint {
            v *= JOINT_SHADE;
        }
        T::lit(v.clamp(0.0, 1.0))
    }))
}

/// Tangent-space normal map from a height field: central differences inside,
/// one-sided differences at the borders, `n = normalize(-s*gx, -s*gy, 1)`,
/// encoded as `(n + 1) / 2`.
pub fn normal_from_gradient<T: Real>(height: &Raster<T>, strength: T) -> Result<Raster<T>> {
    if height.is_empty() {
        return Err(Error::param("height raster must be nonempty"));
    }
    if height.channels() != 1 {
        return Err(Error::param("height raster must have one channel"));
    }
    if !(strength > T::zero()) {
        return Err(Error::param("normal strength must be > 0"));
    }
    let (w, h) = height.dims();
    let half = T::lit(0.5);
    let diff = |lo: T, mid: T, hi: T, i: usize, n: usize| -> T {
        if n == 1 {
            T::zero()
        } else if i == 0 {
            hi - mid
        } else if i == n - 1 {
            mid - lo
        } else {
            (hi - lo) * half
        }
    };
    let mut out = Raster::filled(w, h, 3, T::zero());
    for y in 0..h {
        for x in 0..w {
            let c = height.get(x, y, 0);
            let gx = diff(
                height.get(x.saturating_sub(1), y, 0),
                c,
                height.get((x + 1).min(w - 1), y, 0),
                x,
                w,
            );
            let gy = diff(
                height.get(x, y.saturating_sub(1), 0),
                c,
                height.get(x, (y + 1).min(h - 1), 0),
                y,
                h,
            );
            let (nx, ny) = (-strength * gx, -strength * gy);
            let inv = (nx * nx + ny * ny + T::one()).sqrt().recip();
            let p = out.pixel_mut(x, y);
            p[0] = (nx * inv + T::one()) * half;
            p[1] = (ny * inv + T::one()) * half;
            p[2] = (inv + T::one()) * half;
        }
    }
    Ok(out)
}

/// Decodes an encoded normal back to a vector in [-1, 1]^3.
#[inline]
pub fn decode_normal<T: Real>(enc: &[T]) -> [T; 3] {
    let two = T::lit(2.0);
    [enc[0] * two - T::one(), enc[1] * two - T::one(), enc[2] * two - T::one()]
}

/// Appearance parameters of a crack interior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefectStyle {
    /// Interior albedo relative to the surrounding concrete, in (0, 1].
    pub darkening: f64,
    /// Concrete albedo the defect is shaded against.
    pub concrete_gray: f64,
    /// Relative per-pixel albedo noise inside the crack.
    pub noise_amplitude: f64,
    pub normal_strength: f64,
}

impl Default for DefectStyle {
    fn default() -> Self {
        DefectStyle {
            darkening: 0.45,
            concrete_gray: TileSpec::default().base_gray,
            noise_amplitude: 0.15,
            normal_strength: 1.0,
        }
    }
}

/// RGB, normal and opacity rasters describing one defect.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectTexture<T> {
    pub rgb: Raster<T>,
    pub normal: Raster<T>,
    pub opacity: Mask,
}

/// Distance in pixels from each opacity pixel to the nearest background
/// pixel (out-of-bounds counts as background), clamped at 3; zero outside.
fn crack_depth(opacity: &Mask) -> Raster<f64> {
    let r = DEPTH_CLAMP_PX as isize;
    let mut offsets: Vec<(isize, isize, f64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy, ((dx * dx + dy * dy) as f64).sqrt())))
        .filter(|&(_, _, d)| d > 0.0 && d < DEPTH_CLAMP_PX)
        .collect();
    offsets.sort_by(|a, b| a.2.total_cmp(&b.2));
    let (w, h) = opacity.dims();
    Raster::from_fn(w, h, 1, |x, y, _| {
        if opacity.get(x, y, 0) == 0 {
            return 0.0;
        }
        offsets
            .iter()
            .find(|&&(dx, dy, _)| {
                let (sx, sy) = (x as isize + dx, y as isize + dy);
                sx < 0
                    || sy < 0
                    || sx >= w as isize
                    || sy >= h as isize
                    || opacity.get(sx as usize, sy as usize, 0) == 0
            })
            .map_or(DEPTH_CLAMP_PX, |o| o.2)
    })
}

/// Builds the defect triplet for a binary opacity raster. The RGB is the
/// darkened, noise-modulated crack interior (zero outside the opacity); the
/// normal map comes from a height field depressed by the clamped distance
/// into the crack, scaled by the darkening.
pub fn assemble_defect<T: Real>(
    opacity: &Mask,
    seed: u64,
    style: &DefectStyle,
) -> Result<DefectTexture<T>> {
    if !(style.darkening > 0.0 && style.darkening <= 1.0) {
        return Err(Error::param("darkening must be in (0, 1]"));
    }
    if !opacity.is_binary() {
        return Err(Error::param("opacity must be binary"));
    }
    if opacity.count_ones() == 0 {
        return Err(Error::EmptyDefect);
    }
    let (w, h) = opacity.dims();
    let depth = crack_depth(opacity);
    let height = depth.map(|d| T::lit(-style.darkening * d));
    let normal = normal_from_gradient(&height, T::lit(style.normal_strength))?;

    let mut rng = rng::rng_from(rng::mix(seed, rng::stream::DEFECT));
    let level = style.concrete_gray * style.darkening;
    let mut rgb = Raster::filled(w, h, 3, T::zero());
    for y in 0..h {
        for x in 0..w {
            if opacity.get(x, y, 0) == 0 {
                continue;
            }
            let u = if style.noise_amplitude > 0.0 {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            };
            let v = T::lit((level * (1.0 + style.noise_amplitude * u)).clamp(0.0, 1.0));
            rgb.pixel_mut(x, y).fill(v);
        }
    }
    Ok(DefectTexture {
        rgb,
        normal,
        opacity: opacity.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interior_std(tile: &Raster<f64>, margin: usize) -> f64 {
        let n = tile.width();
        let vals: Vec<f64> = (margin..n - margin)
            .flat_map(|y| (margin..n - margin).map(move |x| (x, y)))
            .map(|(x, y)| tile.get(x, y, 0))
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
    }

    #[test]
    fn flat_tile_without_noise_or_joints() {
        let spec = TileSpec {
            noise_amplitude: 0.0,
            joint_width_m: 0.0,
            resolution_px: 32,
            ..TileSpec::default()
        };
        let t: Raster<f64> = synthesize_tile(&spec).unwrap();
        assert!(t.data().iter().all(|&v| v == spec.base_gray));
    }

    #[test]
    fn tile_is_deterministic_and_seeded() {
        let spec = TileSpec {
            resolution_px: 64,
            ..TileSpec::default()
        };
        let a: Raster<f32> = synthesize_tile(&spec).unwrap();
        assert_eq!(a, synthesize_tile(&spec).unwrap());
        let b: Raster<f32> = synthesize_tile(&TileSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, b);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn tile_noise_std_tracks_amplitude() {
        for seed in 0..10 {
            let spec = TileSpec {
                seed,
                ..TileSpec::default()
            };
            let t: Raster<f64> = synthesize_tile(&spec).unwrap();
            let s = interior_std(&t, 5);
            let target = spec.noise_amplitude * spec.base_gray;
            assert!((s / target - 1.0).abs() < 0.3, "seed {seed}: std {s} vs {target}");
        }
    }

    #[test]
    fn joints_are_darker() {
        let spec = TileSpec {
            joint_width_m: 0.05,
            ..TileSpec::default()
        };
        let t: Raster<f64> = synthesize_tile(&spec).unwrap();
        let interior = t.crop(10, 10, 480, 480).unwrap().mean();
        for i in (0..500).step_by(7) {
            assert!(t.get(i, 0, 0) < interior);
            assert!(t.get(0, i, 0) < interior);
            assert!(t.get(499, i, 1) < interior);
        }
        assert!(synthesize_tile::<f64>(&TileSpec { resolution_px: 8, ..spec }).is_err());
    }

    #[test]
    fn constant_height_gives_flat_normals() {
        let h = Raster::filled(9, 6, 1, 0.3f64);
        let n = normal_from_gradient(&h, 2.0).unwrap();
        for p in n.data().chunks(3) {
            assert_eq!(p, &[0.5, 0.5, 1.0]);
        }
        assert!(normal_from_gradient(&h, 0.0).is_err());
        assert!(normal_from_gradient(&Raster::<f64>::filled(0, 0, 1, 0.0), 1.0).is_err());
    }

    #[test]
    fn ramp_gives_closed_form_normal() {
        let (a, s) = (0.37f64, 1.7f64);
        let h = Raster::from_fn(12, 7, 1, |x, _, _| a * x as f64);
        let n = normal_from_gradient(&h, s).unwrap();
        let norm = ((s * a).powi(2) + 1.0).sqrt();
        let expected = [-s * a / norm, 0.0, 1.0 / norm];
        for y in 0..7 {
            for x in 0..12 {
                let d = decode_normal(n.pixel(x, y));
                for c in 0..3 {
                    assert!((d[c] - expected[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn horizontal_flip_negates_x_component() {
        let h = Raster::from_fn(11, 8, 1, |x, y, _| ((x * 7 + y * 3) % 5) as f64 * 0.1);
        let n = normal_from_gradient(&h, 1.0).unwrap();
        let nf = normal_from_gradient(&h.flip_horizontal(), 1.0).unwrap();
        for y in 0..8 {
            for x in 0..11 {
                let a = n.get(x, y, 0) - 0.5;
                let b = nf.get(10 - x, y, 0) - 0.5;
                assert!((a + b).abs() < 1e-12);
                assert!((n.get(x, y, 1) - nf.get(10 - x, y, 1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flat_defect_interior() {
        let opacity = Mask::filled(20, 16, 1, 1);
        let style = DefectStyle {
            darkening: 1.0,
            noise_amplitude: 0.0,
            ..DefectStyle::default()
        };
        let d: DefectTexture<f64> = assemble_defect(&opacity, 4, &style).unwrap();
        let v0 = d.rgb.get(0, 0, 0);
        assert!(d.rgb.data().iter().all(|&v| v == v0));
        for y in 4..12 {
            for x in 4..16 {
                assert_eq!(d.normal.pixel(x, y), &[0.5, 0.5, 1.0]);
            }
        }
    }

    #[test]
    fn empty_or_nonbinary_opacity_is_rejected() {
        let style = DefectStyle::default();
        assert!(matches!(
            assemble_defect::<f32>(&Mask::filled(5, 5, 1, 0), 0, &style),
            Err(Error::EmptyDefect)
        ));
        assert!(assemble_defect::<f32>(&Mask::filled(5, 5, 1, 255), 0, &style).is_err());
    }

    #[test]
    fn default_darkening_keeps_cracks_dark() {
        let style = DefectStyle::default();
        let tile = TileSpec::default();
        for seed in 0..10u64 {
            let path = crate::cracksynth::generate_crack::<f64>(seed, &Default::default())
                .unwrap()
                .translated(2.0, 2.0);
            let opacity = crate::cracksynth::rasterize_crack(&path, 0.01, 400, 400)
                .unwrap()
                .mask;
            if opacity.count_ones() == 0 {
                continue;
            }
            let d: DefectTexture<f64> = assemble_defect(&opacity, seed, &style).unwrap();
            let lum = d.rgb.luminance();
            let (mut s, mut n) = (0.0, 0usize);
            for (v, &o) in lum.data().iter().zip(opacity.data()) {
                if o == 1 {
                    s += v;
                    n += 1;
                }
            }
            assert!(s / n as f64 <= style.darkening * style.concrete_gray + 1e-3);
            assert!(s / (n as f64) < 0.6 * tile.base_gray);
        }
    }

    proptest! {
        #[test]
        fn normals_decode_to_unit_vectors(
            vals in prop::collection::vec(-5.0f64..5.0, 6 * 5),
            strength in 0.01f64..10.0,
        ) {
            let h = Raster::from_vec(6, 5, 1, vals).unwrap();
            let n = normal_from_gradient(&h, strength).unwrap();
            for p in n.data().chunks(3) {
                let d = decode_normal(p);
                let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                prop_assert!((len - 1.0).abs() < 1e-3);
                prop_assert!(d[2] > 0.0);
            }
        }

        #[test]
        fn triplet_shapes_agree(bits in prop::collection::vec(0u8..2, 7 * 9), seed in any::<u64>()) {
            let mut bits = bits;
            bits[0] = 1;
            let opacity = Mask::from_vec(7, 9, 1, bits).unwrap();
            let d: DefectTexture<f32> = assemble_defect(&opacity, seed, &DefectStyle::default()).unwrap();
            prop_assert_eq!(d.rgb.dims(), opacity.dims());
            prop_assert_eq!(d.normal.dims(), opacity.dims());
            prop_assert!(d.opacity.is_binary());
            for p in d.normal.data().chunks(3) {
                let v = decode_normal(p);
                let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                prop_assert!((len - 1.0).abs() < 1e-3 && v[2] > 0.0);
            }
        }
    }
}
