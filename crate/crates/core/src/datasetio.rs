//! Dataset persistence: manifests, PNG encodings, splitting, cropping,
//! padding and import of external image/mask directories.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/header.json        dataset header
//! <root>/manifest.jsonl     one entry per line
//! <root>/images/*.png       8-bit RGB
//! <root>/masks/*.png        8-bit gray, 0 = background, 255 = defect
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use log::warn;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::rng;
use crate::scene::Sample;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const HEADER_FILE: &str = "header.json";
/// Gray level at or above which a stored mask pixel counts as defect.
pub const MASK_THRESHOLD: u8 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub master_seed: Option<u64>,
    pub config_hash: Option<String>,
}

impl Default for ManifestHeader {
    fn default() -> Self {
        ManifestHeader {
            format_version: FORMAT_VERSION,
            master_seed: None,
            config_hash: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub image_path: String,
    pub mask_path: String,
    pub split: Split,
    pub source: String,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Data(format!("duplicate manifest id {}", e.id)));
            }
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }
}

/// Resolves an entry path against the dataset root.
pub fn resolve(root: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Accepts either a dataset directory or the path of its `manifest.jsonl`
/// and returns `(root, manifest path)`.
pub fn locate(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (root, path.to_path_buf())
    }
}

/// Writes `header.json` and `manifest.jsonl` under `root`.
pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    manifest.check_unique_ids()?;
    for e in &manifest.entries {
        for p in [&e.image_path, &e.mask_path] {
            let full = resolve(root, p);
            if !full.exists() {
                return Err(Error::Data(format!(
                    "entry {} references missing file {}",
                    e.id,
                    full.display()
                )));
            }
        }
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let header_path = root.join(HEADER_FILE);
    let mut header = serde_json::to_vec_pretty(&manifest.header)
        .map_err(|e| Error::Data(e.to_string()))?;
    header.push(b'\n');
    fs::write(&header_path, header).map_err(|e| Error::io(&header_path, e))?;

    let mut body = Vec::new();
    for e in &manifest.entries {
        serde_json::to_writer(&mut body, e).map_err(|e| Error::Data(e.to_string()))?;
        body.push(b'\n');
    }
    let path = root.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&body).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let (root, manifest_path) = locate(path);
    let header_path = root.join(HEADER_FILE);
    let header = if header_path.exists() {
        let bytes = fs::read(&header_path).map_err(|e| Error::io(&header_path, e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Data(format!("{}: {e}", header_path.display())))?
    } else {
        ManifestHeader::default()
    };
    let f = fs::File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&manifest_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", manifest_path.display(), n + 1))
        })?;
        entries.push(entry);
    }
    let manifest = Manifest { header, entries };
    manifest.check_unique_ids()?;
    Ok(manifest)
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

#[inline]
fn to_u8<T: crate::Real>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 3-channel raster in [0, 1] as 8-bit RGB PNG.
pub fn write_rgb_png<T: crate::Real>(path: &Path, image: &Raster<T>) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::param("RGB PNG needs a 3-channel raster"));
    }
    ensure_parent(path)?;
    let (w, h) = image.dims();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, image.data().iter().map(|&v| to_u8(v)).collect())
            .expect("buffer size");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    ensure_parent(path)?;
    let (w, h) = mask.dims();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(
        w as u32,
        h as u32,
        mask.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect(),
    )
    .expect("buffer size");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

/// Reads any supported image as RGB with values `v / 255`.
pub fn read_rgb(path: &Path) -> Result<Raster<f32>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_rgb8();
    let (w, h) = img.dimensions();
    Raster::from_vec(
        w as usize,
        h as usize,
        3,
        img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    )
}

/// Reads a mask, binarizing its gray level at [`MASK_THRESHOLD`].
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma8();
    let (w, h) = img.dimensions();
    Raster::from_vec(
        w as usize,
        h as usize,
        1,
        img.into_raw()
            .into_iter()
            .map(|v| (v >= MASK_THRESHOLD) as u8)
            .collect(),
    )
}

/// Writes a probability map as 16-bit gray PNG (`round(p * 65535)`).
pub fn write_prob_png<T: crate::Real>(path: &Path, prob: &Raster<T>) -> Result<()> {
    if prob.channels() != 1 {
        return Err(Error::param("probability map must have one channel"));
    }
    ensure_parent(path)?;
    let (w, h) = prob.dims();
    let data: Vec<u16> = prob
        .data()
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).expect("buffer size");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

/// Reads a 16-bit (or 8-bit, widened) gray image as probabilities `v / 65535`.
pub fn read_prob_png(path: &Path) -> Result<Raster<f64>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    Raster::from_vec(
        w as usize,
        h as usize,
        1,
        img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
    )
}

pub fn load_sample(root: &Path, entry: &ManifestEntry) -> Result<Sample> {
    let image_path = resolve(root, &entry.image_path);
    let mask_path = resolve(root, &entry.mask_path);
    let image = read_rgb(&image_path)?;
    let mask = read_mask(&mask_path)?;
    if image.dims() != mask.dims() {
        return Err(Error::FileDimensions {
            path: mask_path,
            expected: image.dims(),
            actual: mask.dims(),
        });
    }
    Ok(Sample::from_parts(image, mask))
}

/// Reassigns splits: the ids are sorted, shuffled with a generator keyed by
/// `seed`, and the first `round(n * train_fraction)` become train.
pub fn split(manifest: &Manifest, train_fraction: f64, seed: u64) -> Result<Manifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param("train_fraction must be in (0, 1)"));
    }
    let n = manifest.entries.len();
    if n < 2 {
        return Err(Error::param("split needs at least 2 entries"));
    }
    manifest.check_unique_ids()?;
    let mut ids: Vec<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = rng::rng_from(rng::mix(seed, rng::stream::SPLIT));
    ids.shuffle(&mut rng);
    let n_train = (n as f64 * train_fraction).round() as usize;
    let train: HashSet<&str> = ids[..n_train].iter().copied().collect();
    let mut out = manifest.clone();
    for e in &mut out.entries {
        e.split = if train.contains(e.id.as_str()) {
            Split::Train
        } else {
            Split::Val
        };
    }
    Ok(out)
}

/// Random `size x size` crop at a uniformly drawn valid offset.
pub fn crop_sample(sample: &Sample, size: usize, seed: u64) -> Result<Sample> {
    let (w, h) = sample.image.dims();
    if w < size || h < size || size == 0 {
        return Err(Error::param(format!(
            "cannot crop {size}x{size} from {w}x{h}; pad first"
        )));
    }
    let mut rng = rng::rng_from(rng::mix(seed, rng::stream::CROP));
    let x0 = rng.random_range(0..=w - size);
    let y0 = rng.random_range(0..=h - size);
    Ok(Sample::from_parts(
        sample.image.crop(x0, y0, size, size)?,
        sample.mask.crop(x0, y0, size, size)?,
    ))
}

/// Image padding rule for [`pad_to_multiple`]. Masks are always zero-padded.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum PadFill {
    #[default]
    ReplicateEdge,
    Constant(f32),
}

/// Pads right and bottom to the next multiple of `multiple`; returns the
/// original `(width, height)` for [`unpad`].
pub fn pad_to_multiple(
    sample: &Sample,
    multiple: usize,
    fill: PadFill,
) -> Result<(Sample, (usize, usize))> {
    if multiple == 0 {
        return Err(Error::param("multiple must be >= 1"));
    }
    let dims = sample.image.dims();
    let up = |v: usize| v.div_ceil(multiple) * multiple;
    let (w, h) = (up(dims.0), up(dims.1));
    if (w, h) == dims {
        return Ok((sample.clone(), dims));
    }
    let fill = match fill {
        PadFill::ReplicateEdge => None,
        PadFill::Constant(v) => Some(v),
    };
    let mut padded = sample.clone();
    padded.image = sample.image.pad_to(w, h, fill);
    padded.mask = sample.mask.pad_to(w, h, Some(0));
    Ok((padded, dims))
}

/// Crops a padded raster (e.g. a prediction) back to its original size.
pub fn unpad<T: Copy>(raster: &Raster<T>, dims: (usize, usize)) -> Result<Raster<T>> {
    raster.crop(0, 0, dims.0, dims.1)
}

pub fn unpad_sample(sample: &Sample, dims: (usize, usize)) -> Result<Sample> {
    let mut out = sample.clone();
    out.image = unpad(&sample.image, dims)?;
    out.mask = unpad(&sample.mask, dims)?;
    Ok(out)
}

const IMAGE_EXTS: &[&str] = &["png", "jpg", "jpeg", "bmp"];

fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| IMAGE_EXTS.contains(&e.as_str())) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Result of [`import_external`]: the manifest plus files without a partner.
#[derive(Clone, Debug, PartialEq)]
pub struct Import {
    pub manifest: Manifest,
    pub orphan_images: Vec<PathBuf>,
    pub orphan_masks: Vec<PathBuf>,
}

/// Pairs images and masks by filename stem. Entries are ordered by id and
/// reference the source files by absolute path; splits default to train.
pub fn import_external(images_dir: &Path, masks_dir: &Path, source: &str) -> Result<Import> {
    let images = list_images(images_dir)?;
    let masks = list_images(masks_dir)?;
    let abs = |p: &Path| fs::canonicalize(p).map_err(|e| Error::io(p, e));
    let mut entries = Vec::new();
    let mut orphan_images = Vec::new();
    for (stem, img) in &images {
        match masks.get(stem) {
            Some(mask) => entries.push(ManifestEntry {
                id: stem.clone(),
                image_path: abs(img)?.to_string_lossy().into_owned(),
                mask_path: abs(mask)?.to_string_lossy().into_owned(),
                split: Split::Train,
                source: source.to_string(),
                meta: BTreeMap::new(),
            }),
            None => orphan_images.push(img.clone()),
        }
    }
    let orphan_masks: Vec<PathBuf> = masks
        .iter()
        .filter(|(stem, _)| !images.contains_key(*stem))
        .map(|(_, p)| p.clone())
        .collect();
    if entries.is_empty() {
        return Err(Error::NoPairs);
    }
    for p in orphan_images.iter().chain(&orphan_masks) {
        warn!("unmatched file {}", p.display());
    }
    Ok(Import {
        manifest: Manifest {
            header: ManifestHeader::default(),
            entries,
        },
        orphan_images,
        orphan_masks,
    })
}
