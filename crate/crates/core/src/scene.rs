//! Top-down runway scenes: tiled concrete with crack defects cut into
//! their tiles, lit under one of six conditions, rendered together with the
//! pixel-exact defect mask.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cracksynth::{self, CrackParams, CrackPath};
use crate::datasetio::{self, Manifest, ManifestEntry, ManifestHeader, Split};
use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::rng;
use crate::scalar::Real;
use crate::texturegen::{self, decode_normal, DefectStyle, TileSpec};

const PLACEMENT_RETRIES: usize = 16;
/// Long cracks are drawn with this many tile lengths.
const LONG_CRACK_TILES: (f64, f64) = (1.5, 2.5);
/// Heading spread of long cracks around the tile row direction.
const LONG_CRACK_HEADING_STD: f64 = 0.12;

const DUSK_INTENSITY: f64 = 0.5;
const DUSK_TINT: [f64; 3] = [1.08, 0.94, 0.78];
const NIGHT_AMBIENT: f64 = 0.05;
const RAIN_ALBEDO: f64 = 0.75;
const RAIN_CONTRAST: f64 = 0.8;
const RAIN_STREAK_GAIN: f64 = 0.06;
const FOG_GRAY: f64 = 0.7;
const FOG_BLEND: f64 = 0.5;
const CLOUDY_SOFT: f64 = 0.6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[default]
    Noon,
    Dusk,
    Night,
    NoonRain,
    Fog,
    Cloudy,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Noon,
        Condition::Dusk,
        Condition::Night,
        Condition::NoonRain,
        Condition::Fog,
        Condition::Cloudy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Noon => "noon",
            Condition::Dusk => "dusk",
            Condition::Night => "night",
            Condition::NoonRain => "noon_rain",
            Condition::Fog => "fog",
            Condition::Cloudy => "cloudy",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown condition {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spotlight {
    /// Center in pixels.
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub intensity: f64,
}

impl Spotlight {
    /// Smooth falloff `(1 - (d/r)^2)^2` inside the radius, zero outside.
    #[inline]
    pub fn falloff(&self, px: f64, py: f64) -> f64 {
        let d2 = (px - self.x).powi(2) + (py - self.y).powi(2);
        let r2 = self.radius * self.radius;
        if d2 >= r2 {
            0.0
        } else {
            (1.0 - d2 / r2).powi(2)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// `(width, height)` in pixels.
    pub image_size: (usize, usize),
    /// Ground sample distance, meters per pixel.
    pub gsd: f64,
    pub tile_spec: TileSpec,
    /// Inclusive range of defects attempted per scene.
    pub defects_per_scene: (usize, usize),
    pub long_crack_prob: f64,
    /// Crack geometry; `target_length_m` is overridden per defect.
    pub crack: CrackParams<f64>,
    /// Length range of ordinary (single-tile) cracks, meters.
    pub crack_length_m: (f64, f64),
    pub defect_style: DefectStyle,
    pub condition: Condition,
    pub light_dir: [f64; 3],
    pub light_intensity: f64,
    pub ambient: f64,
    pub spotlights: Vec<Spotlight>,
    pub sensor_noise_std: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::synthetic_v1()
    }
}

impl SceneConfig {
    /// Default dataset configuration (denser cracks).
    pub fn synthetic_v1() -> Self {
        let mut c = SceneConfig {
            image_size: (1920, 1080),
            gsd: 0.01,
            tile_spec: TileSpec::default(),
            defects_per_scene: (5, 10),
            long_crack_prob: 0.25,
            crack: CrackParams::default(),
            crack_length_m: (3.0, 5.5),
            defect_style: DefectStyle::default(),
            condition: Condition::Noon,
            light_dir: [0.0, 0.0, 1.0],
            light_intensity: 0.0,
            ambient: 0.0,
            spotlights: Vec::new(),
            sensor_noise_std: 0.01,
            seed: 0,
        };
        c.set_condition(Condition::Noon);
        c
    }

    /// Sparser variant of [`SceneConfig::synthetic_v1`].
    pub fn synthetic_v2() -> Self {
        SceneConfig {
            defects_per_scene: (1, 5),
            long_crack_prob: 0.15,
            ..SceneConfig::synthetic_v1()
        }
    }

    /// Sets the condition together with its default light rig.
    pub fn set_condition(&mut self, condition: Condition) {
        let (w, h) = (self.image_size.0 as f64, self.image_size.1 as f64);
        self.condition = condition;
        self.spotlights.clear();
        let (ambient, intensity, dir): (f64, f64, [f64; 3]) = match condition {
            Condition::Noon | Condition::NoonRain | Condition::Fog => {
                (0.35, 0.75, [0.25, -0.2, 0.95])
            }
            Condition::Dusk => (0.25, 0.75, [0.85, 0.1, 0.35]),
            Condition::Night => {
                let r = 0.3 * w.max(h);
                self.spotlights = [0.25, 0.75]
                    .into_iter()
                    .map(|fx| Spotlight {
                        x: fx * w,
                        y: 0.5 * h,
                        radius: r,
                        intensity: 0.9,
                    })
                    .collect();
                (NIGHT_AMBIENT, 0.0, [0.0, 0.0, 1.0])
            }
            Condition::Cloudy => (0.45, 0.5, [0.0, 0.0, 1.0]),
        };
        self.ambient = ambient;
        self.light_intensity = intensity;
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        self.light_dir = [dir[0] / n, dir[1] / n, dir[2] / n];
    }

    pub fn with_condition(mut self, condition: Condition) -> Self {
        self.set_condition(condition);
        self
    }

    /// Pixels per tile edge.
    pub fn tile_px(&self) -> usize {
        (self.tile_spec.size_m / self.gsd).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        if w == 0 || h == 0 {
            return Err(Error::param("image_size must be nonempty"));
        }
        if !(self.gsd > 0.0 && self.gsd.is_finite()) {
            return Err(Error::param("gsd must be > 0"));
        }
        TileSpec {
            resolution_px: self.tile_px(),
            ..self.tile_spec.clone()
        }
        .validate()?;
        self.crack.validate()?;
        let (lo, hi) = self.defects_per_scene;
        if lo > hi {
            return Err(Error::param("defects_per_scene min exceeds max"));
        }
        let (lmin, lmax) = self.crack_length_m;
        if !(lmin > 0.0 && lmin <= lmax) {
            return Err(Error::param("crack_length_m must satisfy 0 < min <= max"));
        }
        if !(0.0..=1.0).contains(&self.long_crack_prob) {
            return Err(Error::param("long_crack_prob must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::param("ambient must be in [0, 1]"));
        }
        if !(self.light_intensity >= 0.0) || self.spotlights.iter().any(|s| !(s.intensity >= 0.0))
        {
            return Err(Error::param("light intensities must be >= 0"));
        }
        if self.spotlights.iter().any(|s| !(s.radius > 0.0)) {
            return Err(Error::param("spotlight radius must be > 0"));
        }
        let [lx, ly, lz] = self.light_dir;
        if !((lx * lx + ly * ly + lz * lz).sqrt() > 0.0) {
            return Err(Error::param("light_dir must be nonzero"));
        }
        if !(self.sensor_noise_std >= 0.0) {
            return Err(Error::param("sensor_noise_std must be >= 0"));
        }
        if !(self.defect_style.darkening > 0.0 && self.defect_style.darkening <= 1.0) {
            return Err(Error::param("defect darkening must be in (0, 1]"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub condition: Option<Condition>,
    pub defect_count: usize,
    pub crack_pixel_fraction: f64,
}

/// One dataset item: RGB image in [0, 1], binary defect mask, provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Raster<f32>,
    pub mask: Mask,
    pub meta: SampleMeta,
    /// Placed crack skeletons in image meters (empty for loaded samples).
    pub defects: Vec<CrackPath<f64>>,
    pub warnings: Vec<String>,
}

pub fn crack_fraction(mask: &Mask) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.count_ones() as f64 / (mask.width() * mask.height()) as f64
}

impl Sample {
    /// Wraps an image/mask pair, deriving the mask statistics.
    pub fn from_parts(image: Raster<f32>, mask: Mask) -> Self {
        debug_assert_eq!(image.dims(), mask.dims());
        let meta = SampleMeta {
            seed: 0,
            condition: None,
            defect_count: 0,
            crack_pixel_fraction: crack_fraction(&mask),
        };
        Sample {
            image,
            mask,
            meta,
            defects: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.image.ensure_same_dims(&self.mask)?;
        if !self.mask.is_binary() {
            return Err(Error::Data("mask is not binary".into()));
        }
        Ok(())
    }

    /// Recomputes `meta.crack_pixel_fraction` from the mask.
    pub fn refresh_fraction(&mut self) {
        self.meta.crack_pixel_fraction = crack_fraction(&self.mask);
    }
}

/// Shades `albedo` with ambient, directional and spotlight terms, then
/// applies the condition's post effect. `normals` are tangent-space encoded.
pub fn apply_lighting<T: Real>(
    albedo: &Raster<T>,
    normals: &Raster<T>,
    config: &SceneConfig,
) -> Result<Raster<T>> {
    albedo.ensure_same_dims(normals)?;
    if albedo.channels() != 3 || normals.channels() != 3 {
        return Err(Error::param("lighting needs 3-channel albedo and normals"));
    }
    let (w, h) = albedo.dims();
    let mut ambient = config.ambient;
    let mut directional = config.light_intensity;
    let mut soft = 0.0;
    let mut albedo_gain = 1.0;
    match config.condition {
        Condition::Noon | Condition::Fog => {}
        Condition::Dusk => directional *= DUSK_INTENSITY,
        Condition::Night => {
            ambient = ambient.min(NIGHT_AMBIENT);
            directional = 0.0;
        }
        Condition::NoonRain => albedo_gain = RAIN_ALBEDO,
        Condition::Cloudy => {
            soft = directional * CLOUDY_SOFT;
            directional = 0.0;
        }
    }
    let [lx, ly, lz] = config.light_dir;
    let ln = (lx * lx + ly * ly + lz * lz).sqrt();
    let l = [lx / ln, ly / ln, lz / ln];

    let mut out = Raster::filled(w, h, 3, T::zero());
    for y in 0..h {
        for x in 0..w {
            let n = decode_normal(normals.pixel(x, y)).map(|v| v.as_f64());
            let ndotl = (n[0] * l[0] + n[1] * l[1] + n[2] * l[2]).max(0.0);
            let mut shade = ambient + soft;
            if directional != 0.0 {
                shade += directional * ndotl;
            }
            for s in &config.spotlights {
                shade += s.intensity * s.falloff(x as f64 + 0.5, y as f64 + 0.5);
            }
            let a = albedo.pixel(x, y);
            let o = out.pixel_mut(x, y);
            for c in 0..3 {
                o[c] = T::lit(a[c].as_f64() * albedo_gain * shade);
            }
        }
    }
    out.clamp01();

    match config.condition {
        Condition::Dusk => {
            for p in out.data_mut().chunks_exact_mut(3) {
                for c in 0..3 {
                    p[c] = p[c] * T::lit(DUSK_TINT[c]);
                }
            }
        }
        Condition::NoonRain => {
            rain_streaks(&mut out, config.seed);
            let mean = out.mean();
            let k = T::lit(RAIN_CONTRAST);
            for v in out.data_mut() {
                *v = mean + k * (*v - mean);
            }
        }
        Condition::Fog => {
            let (gray, f) = (T::lit(FOG_GRAY), T::lit(FOG_BLEND));
            for v in out.data_mut() {
                *v = *v * (T::one() - f) + gray * f;
            }
        }
        _ => {}
    }
    out.clamp01();
    Ok(out)
}

/// Short bright streaks from specular reflections on wet pavement.
fn rain_streaks<T: Real>(image: &mut Raster<T>, seed: u64) {
    let (w, h) = image.dims();
    let mut rng = rng::rng_from(rng::mix(seed, rng::stream::RAIN));
    let count = (w * h) / 4000;
    let gain = T::lit(RAIN_STREAK_GAIN);
    for _ in 0..count {
        let (x0, y0) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let len = rng.random_range(8.0..24.0f64);
        let angle = rng.random_range(95.0f64..115.0).to_radians();
        let (dx, dy) = (angle.cos(), angle.sin());
        for t in 0..len as usize {
            let (x, y) = (x0 + dx * t as f64, y0 + dy * t as f64);
            if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                break;
            }
            for v in image.pixel_mut(x as usize, y as usize) {
                *v = *v + gain;
            }
        }
    }
}

struct TileGrid {
    tile_px: usize,
    offset: (usize, usize),
    cols: usize,
    rows: usize,
}

impl TileGrid {
    fn tile_of(&self, x: usize, y: usize) -> usize {
        let i = (x + self.offset.0) / self.tile_px;
        let j = (y + self.offset.1) / self.tile_px;
        j * self.cols + i
    }
}

/// Renders one scene. Defects are placed one per free tile (long cracks
/// claim every tile they cross); a defect that cannot be placed after
/// bounded retries is dropped with a warning.
pub fn compose_scene(config: &SceneConfig) -> Result<Sample> {
    config.validate()?;
    let (w, h) = config.image_size;
    let seed = config.seed;
    let tile_px = config.tile_px();
    let mut rng = rng::rng_from(rng::mix(seed, rng::stream::PLACEMENT));
    let offset = (rng.random_range(0..tile_px), rng.random_range(0..tile_px));
    let grid = TileGrid {
        tile_px,
        offset,
        cols: (w + offset.0).div_ceil(tile_px),
        rows: (h + offset.1).div_ceil(tile_px),
    };

    let mut albedo = Raster::<f32>::filled(w, h, 3, 0.0);
    let tile_seed = rng::mix(seed, rng::stream::TILE);
    for j in 0..grid.rows {
        for i in 0..grid.cols {
            let spec = TileSpec {
                resolution_px: tile_px,
                seed: rng::mix(tile_seed, (j * grid.cols + i) as u64),
                ..config.tile_spec.clone()
            };
            let tile: Raster<f32> = texturegen::synthesize_tile(&spec)?;
            let x_start = (i * tile_px).saturating_sub(offset.0);
            let x_end = ((i + 1) * tile_px - offset.0).min(w);
            let y_start = (j * tile_px).saturating_sub(offset.1);
            let y_end = ((j + 1) * tile_px - offset.1).min(h);
            for y in y_start..y_end {
                let ty = y + offset.1 - j * tile_px;
                for x in x_start..x_end {
                    let tx = x + offset.0 - i * tile_px;
                    albedo.pixel_mut(x, y).copy_from_slice(tile.pixel(tx, ty));
                }
            }
        }
    }

    let mut normals = Raster::<f32>::filled(w, h, 3, 0.0);
    for p in normals.data_mut().chunks_exact_mut(3) {
        p.copy_from_slice(&[0.5, 0.5, 1.0]);
    }
    let mut mask = Mask::filled(w, h, 1, 0);
    let mut occupied = vec![false; grid.cols * grid.rows];
    let mut defects = Vec::new();
    let mut warnings = Vec::new();
    let style = DefectStyle {
        concrete_gray: config.tile_spec.base_gray,
        ..config.defect_style.clone()
    };

    let (dmin, dmax) = config.defects_per_scene;
    let wanted = rng.random_range(dmin..=dmax);
    let crack_seed = rng::mix(seed, rng::stream::CRACK);
    let size_m = config.tile_spec.size_m;
    for d in 0..wanted {
        let mut placed = false;
        for attempt in 0..PLACEMENT_RETRIES {
            let tile = rng.random_range(0..occupied.len());
            if occupied[tile] {
                continue;
            }
            let (i, j) = (tile % grid.cols, tile / grid.cols);
            let sx = (i * tile_px) as f64 + rng.random_range(0.1..0.9) * tile_px as f64
                - offset.0 as f64;
            let sy = (j * tile_px) as f64 + rng.random_range(0.1..0.9) * tile_px as f64
                - offset.1 as f64;
            if sx < 0.0 || sy < 0.0 || sx >= w as f64 || sy >= h as f64 {
                continue;
            }
            let long = rng.random::<f64>() < config.long_crack_prob;
            let (length, heading) = if long {
                let dir = if rng.random::<bool>() { 0.0 } else { std::f64::consts::PI };
                let jitter: f64 = Normal::new(0.0, LONG_CRACK_HEADING_STD)
                    .unwrap()
                    .sample(&mut rng);
                (
                    rng.random_range(LONG_CRACK_TILES.0..=LONG_CRACK_TILES.1) * size_m,
                    dir + jitter,
                )
            } else {
                (
                    rng.random_range(config.crack_length_m.0..=config.crack_length_m.1),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            };
            let params = CrackParams {
                target_length_m: length,
                ..config.crack.clone()
            };
            let attempt_seed = rng::mix(crack_seed, (d * PLACEMENT_RETRIES + attempt) as u64);
            let mut crack_rng = rng::rng_from(attempt_seed);
            let path = cracksynth::generate_crack_with_heading(&mut crack_rng, &params, heading)?
                .translated(sx * config.gsd, sy * config.gsd);

            let Some((x0, y0, cw, ch)) = pixel_window(&path, config.gsd, w, h) else {
                continue;
            };
            let rast =
                cracksynth::rasterize_window(&path, config.gsd, x0 as i64, y0 as i64, cw, ch)?;
            if rast.empty {
                continue;
            }
            let mut touched = Vec::new();
            let mut clash = false;
            for yy in 0..ch {
                for xx in 0..cw {
                    if rast.mask.get(xx, yy, 0) == 0 {
                        continue;
                    }
                    let t = grid.tile_of(x0 + xx, y0 + yy);
                    clash |= occupied[t];
                    touched.push(t);
                }
            }
            if clash {
                continue;
            }
            for t in touched {
                occupied[t] = true;
            }

            let defect = texturegen::assemble_defect::<f32>(&rast.mask, attempt_seed, &style)?;
            for yy in 0..ch {
                for xx in 0..cw {
                    if defect.opacity.get(xx, yy, 0) == 0 {
                        continue;
                    }
                    let (x, y) = (x0 + xx, y0 + yy);
                    albedo.pixel_mut(x, y).copy_from_slice(defect.rgb.pixel(xx, yy));
                    normals.pixel_mut(x, y).copy_from_slice(defect.normal.pixel(xx, yy));
                    mask.set(x, y, 0, 1);
                }
            }
            defects.push(path);
            placed = true;
            break;
        }
        if !placed {
            warnings.push(format!(
                "defect {d} not placed after {PLACEMENT_RETRIES} attempts"
            ));
        }
    }

    let mut image = apply_lighting(&albedo, &normals, config)?;
    if config.sensor_noise_std > 0.0 {
        let mut noise_rng = rng::rng_from(rng::mix(seed, rng::stream::SENSOR));
        let dist = Normal::new(0.0f32, config.sensor_noise_std as f32)
            .map_err(|e| Error::param(e.to_string()))?;
        for v in image.data_mut() {
            *v = (*v + dist.sample(&mut noise_rng)).clamp(0.0, 1.0);
        }
    }

    let meta = SampleMeta {
        seed,
        condition: Some(config.condition),
        defect_count: defects.len(),
        crack_pixel_fraction: crack_fraction(&mask),
    };
    Ok(Sample {
        image,
        mask,
        meta,
        defects,
        warnings,
    })
}

/// Pixel window `(x0, y0, w, h)` covering the path bounds, clipped to the image.
fn pixel_window(
    path: &CrackPath<f64>,
    gsd: f64,
    w: usize,
    h: usize,
) -> Option<(usize, usize, usize, usize)> {
    let (lo, hi) = path.bounds();
    let x0 = ((lo.x / gsd).floor() as i64 - 1).max(0);
    let y0 = ((lo.y / gsd).floor() as i64 - 1).max(0);
    let x1 = ((hi.x / gsd).ceil() as i64 + 1).min(w as i64);
    let y1 = ((hi.y / gsd).ceil() as i64 + 1).min(h as i64);
    (x0 < x1 && y0 < y1).then(|| {
        (
            x0 as usize,
            y0 as usize,
            (x1 - x0) as usize,
            (y1 - y0) as usize,
        )
    })
}

/// Seed of sample `index` in a dataset generated from `master_seed`.
pub fn sample_seed(master_seed: u64, index: usize) -> u64 {
    rng::mix(master_seed, index as u64)
}

pub fn sample_id(index: usize) -> String {
    format!("{index:06}")
}

fn meta_map(meta: &SampleMeta) -> BTreeMap<String, serde_json::Value> {
    match serde_json::to_value(meta) {
        Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

/// Renders `count` scenes into `out_dir` (`images/`, `masks/`, manifest and
/// header). Sample `i` uses seed `sample_seed(master_seed, i)`, so the bytes
/// written depend only on the config, the count and the master seed.
pub fn generate_dataset(
    config: &SceneConfig,
    count: usize,
    master_seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<Manifest> {
    if count == 0 {
        return Err(Error::param("count must be >= 1"));
    }
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::param(e.to_string()))?;
    info!("generating {count} samples with {} workers", workers.max(1));

    let results: Vec<Result<ManifestEntry>> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let cfg = SceneConfig {
                    seed: sample_seed(master_seed, i),
                    ..config.clone()
                };
                let sample = compose_scene(&cfg)?;
                for msg in &sample.warnings {
                    warn!("sample {i}: {msg}");
                }
                let id = sample_id(i);
                let image_path = format!("images/{id}.png");
                let mask_path = format!("masks/{id}.png");
                datasetio::write_rgb_png(&out_dir.join(&image_path), &sample.image)?;
                datasetio::write_mask_png(&out_dir.join(&mask_path), &sample.mask)?;
                Ok(ManifestEntry {
                    id,
                    image_path,
                    mask_path,
                    split: Split::Train,
                    source: "synthetic".into(),
                    meta: meta_map(&sample.meta),
                })
            })
            .collect()
    });

    let completed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_ok().then_some(i))
        .collect();
    let mut entries = Vec::with_capacity(count);
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(source) => {
                return Err(Error::PartialOutput {
                    completed,
                    source: Box::new(source),
                })
            }
        }
    }
    let manifest = Manifest {
        header: ManifestHeader {
            master_seed: Some(master_seed),
            config_hash: Some(config.hash()),
            ..ManifestHeader::default()
        },
        entries,
    };
    datasetio::write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(condition: Condition) -> SceneConfig {
        let mut c = SceneConfig {
            image_size: (320, 200),
            gsd: 0.02,
            tile_spec: TileSpec {
                size_m: 2.0,
                ..TileSpec::default()
            },
            crack_length_m: (1.0, 1.8),
            ..SceneConfig::synthetic_v1()
        };
        c.set_condition(condition);
        c.seed = 17;
        c
    }

    fn lum_mean(r: &Raster<f32>) -> f64 {
        r.luminance().mean() as f64
    }

    #[test]
    fn no_defects_gives_empty_mask() {
        let c = SceneConfig {
            defects_per_scene: (0, 0),
            ..small(Condition::Noon)
        };
        let s = compose_scene(&c).unwrap();
        assert_eq!(s.mask.count_ones(), 0);
        assert_eq!(s.meta.defect_count, 0);
        assert_eq!(s.meta.crack_pixel_fraction, 0.0);
    }

    #[test]
    fn default_size_is_full_hd() {
        let c = SceneConfig::default();
        assert_eq!(c.image_size, (1920, 1080));
        let s = compose_scene(&c).unwrap();
        assert_eq!(s.image.dims(), (1920, 1080));
        assert_eq!(s.mask.dims(), (1920, 1080));
    }

    #[test]
    fn mask_is_union_of_placed_defects() {
        for seed in 0..6 {
            let c = SceneConfig {
                seed,
                ..small(Condition::Noon)
            };
            let s = compose_scene(&c).unwrap();
            s.check().unwrap();
            let (w, h) = c.image_size;
            let mut oracle = Mask::filled(w, h, 1, 0);
            for p in &s.defects {
                let r = cracksynth::rasterize_crack(p, c.gsd, w, h).unwrap();
                oracle.union_at(&r.mask, 0, 0);
            }
            assert_eq!(s.mask, oracle);
            assert_eq!(
                s.meta.crack_pixel_fraction,
                s.mask.count_ones() as f64 / (w * h) as f64
            );
            assert_eq!(s.meta.defect_count, s.defects.len());
        }
    }

    #[test]
    fn scene_is_deterministic() {
        let c = small(Condition::NoonRain);
        assert_eq!(compose_scene(&c).unwrap(), compose_scene(&c).unwrap());
    }

    #[test]
    fn identity_lighting() {
        let albedo = Raster::from_fn(8, 5, 3, |x, y, c| ((x + y + c) % 7) as f64 / 7.0);
        let normals = Raster::from_fn(8, 5, 3, |x, _, c| [0.3 + 0.05 * x as f64, 0.6, 0.9][c]);
        let c = SceneConfig {
            ambient: 1.0,
            light_intensity: 0.0,
            spotlights: vec![],
            condition: Condition::Noon,
            ..SceneConfig::default()
        };
        assert_eq!(apply_lighting(&albedo, &normals, &c).unwrap(), albedo);
    }

    #[test]
    fn overhead_light_scales_uniformly() {
        let albedo = Raster::from_fn(6, 6, 3, |x, y, c| ((x * y + c) % 5) as f64 / 10.0);
        let flat = Raster::from_fn(6, 6, 3, |_, _, c| [0.5, 0.5, 1.0][c]);
        let c = SceneConfig {
            ambient: 0.3,
            light_intensity: 0.6,
            light_dir: [0.0, 0.0, 1.0],
            spotlights: vec![],
            condition: Condition::Noon,
            ..SceneConfig::default()
        };
        let out = apply_lighting(&albedo, &flat, &c).unwrap();
        for (o, a) in out.data().iter().zip(albedo.data()) {
            assert!((o - a * 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn night_is_dark_outside_spotlights() {
        let mut c = SceneConfig {
            image_size: (200, 120),
            ..SceneConfig::default()
        }
        .with_condition(Condition::Night);
        c.spotlights = vec![Spotlight {
            x: 60.0,
            y: 60.0,
            radius: 40.0,
            intensity: 0.9,
        }];
        let albedo = Raster::<f32>::filled(200, 120, 3, 1.0);
        let flat = Raster::from_fn(200, 120, 3, |_, _, c| [0.5f32, 0.5, 1.0][c]);
        let out = apply_lighting(&albedo, &flat, &c).unwrap().luminance();
        for y in 0..120 {
            for x in 0..200 {
                let inside = c.spotlights[0].falloff(x as f64 + 0.5, y as f64 + 0.5) > 0.0;
                if !inside {
                    assert!(out.get(x, y, 0) < 0.15);
                }
            }
        }
        assert!(out.get(60, 60, 0) > 0.5);
    }

    #[test]
    fn conditions_order_luminance() {
        for seed in 0..3 {
            let lum = |cond| {
                let c = SceneConfig {
                    seed,
                    ..small(cond)
                };
                lum_mean(&compose_scene(&c).unwrap().image)
            };
            let (night, dusk, noon) = (
                lum(Condition::Night),
                lum(Condition::Dusk),
                lum(Condition::Noon),
            );
            assert!(night < dusk && dusk < noon, "{night} {dusk} {noon}");
        }
    }

    #[test]
    fn every_condition_renders() {
        for cond in Condition::ALL {
            let s = compose_scene(&small(cond)).unwrap();
            s.check().unwrap();
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(cond.as_str().parse::<Condition>().unwrap(), cond);
        }
        assert!("sunset".parse::<Condition>().is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            SceneConfig { gsd: 0.0, ..small(Condition::Noon) },
            SceneConfig { ambient: 1.5, ..small(Condition::Noon) },
            SceneConfig { light_intensity: -1.0, ..small(Condition::Noon) },
            SceneConfig { defects_per_scene: (3, 1), ..small(Condition::Noon) },
        ];
        for c in bad {
            assert!(matches!(compose_scene(&c), Err(Error::Param(_))));
        }
    }

    #[test]
    fn crowded_scene_reports_dropped_defects() {
        let c = SceneConfig {
            defects_per_scene: (40, 40),
            ..small(Condition::Noon)
        };
        let s = compose_scene(&c).unwrap();
        assert!(s.meta.defect_count < 40);
        assert_eq!(s.warnings.len(), 40 - s.meta.defect_count);
    }

    #[test]
    fn dataset_bytes_do_not_depend_on_workers() {
        let c = small(Condition::Noon);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_dataset(&c, 4, 99, a.path(), 1).unwrap();
        let mb = generate_dataset(&c, 4, 99, b.path(), 4).unwrap();
        assert_eq!(ma, mb);
        for e in &ma.entries {
            for p in [&e.image_path, &e.mask_path] {
                assert_eq!(
                    std::fs::read(a.path().join(p)).unwrap(),
                    std::fs::read(b.path().join(p)).unwrap()
                );
            }
        }
        for f in [datasetio::MANIFEST_FILE, datasetio::HEADER_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
        assert!(generate_dataset(&c, 0, 1, a.path(), 1).is_err());
    }

    #[test]
    fn unwritable_output_reports_partial_progress() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("blocked");
        std::fs::write(&blocker, b"file, not a directory").unwrap();
        let err = generate_dataset(&small(Condition::Noon), 2, 1, &blocker, 1).unwrap_err();
        assert!(matches!(err, Error::PartialOutput { .. }));
        assert!(err.is_io());
    }
}
