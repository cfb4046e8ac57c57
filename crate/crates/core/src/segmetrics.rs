//! Pixel-exact segmentation metrics: confusion counts, precision / recall /
//! F1 / IoU at a fixed threshold, and the threshold sweeps ODS (best F1 of
//! the dataset-aggregated counts) and OIS (mean of per-image best F1).
//!
//! A pixel is predicted positive iff `p >= t`. When a denominator vanishes:
//! empty ground truth with empty prediction scores 1 on every metric, and a
//! metric whose denominator vanishes while the other side is nonempty
//! scores 0.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasetio::{self, Manifest};
use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::scalar::Real;

pub const DEFAULT_GRID_STEPS: usize = 99;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

fn check_pair<T: Real>(p: &Raster<T>, r: &Mask) -> Result<()> {
    p.ensure_same_dims(r)?;
    if p.channels() != 1 || r.channels() != 1 {
        return Err(Error::param("metrics take single-channel rasters"));
    }
    Ok(())
}

fn check_threshold<T: Real>(t: T) -> Result<()> {
    if !(t > T::zero() && t < T::one()) {
        return Err(Error::param(format!("threshold {t:?} outside (0, 1)")));
    }
    Ok(())
}

pub fn confusion<T: Real>(p: &Raster<T>, r: &Mask, t: T) -> Result<ConfusionCounts> {
    check_pair(p, r)?;
    check_threshold(t)?;
    let mut c = ConfusionCounts::default();
    for (&pv, &rv) in p.data().iter().zip(r.data()) {
        match (pv >= t, rv != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn prf_iou(c: &ConfusionCounts) -> Scores {
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    let pred_empty = c.tp + c.fp == 0;
    let gt_empty = c.tp + c.fn_ == 0;
    if pred_empty && gt_empty {
        return Scores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            iou: 1.0,
        };
    }
    let precision = if pred_empty { 0.0 } else { tp / (tp + fp) };
    let recall = if gt_empty { 0.0 } else { tp / (tp + fn_) };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        precision,
        recall,
        f1,
        iou: tp / (tp + fp + fn_),
    }
}

/// Thresholds `k / (steps + 1)` for `k = 1..=steps`; 99 steps give
/// 0.01, 0.02, ..., 0.99.
pub fn default_grid<T: Real>(steps: usize) -> Vec<T> {
    (1..=steps)
        .map(|k| T::lit(k as f64 / (steps + 1) as f64))
        .collect()
}

fn sorted_grid<T: Real>(grid: &[T]) -> Result<Vec<T>> {
    if grid.is_empty() {
        return Err(Error::param("threshold grid is empty"));
    }
    for &t in grid {
        check_threshold(t)?;
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    g.dedup();
    Ok(g)
}

/// Confusion counts of one image at every threshold of a sorted grid,
/// computed in one pass by binning each pixel on the number of thresholds
/// it clears.
fn sweep_counts<T: Real>(p: &Raster<T>, r: &Mask, grid: &[T]) -> Vec<ConfusionCounts> {
    let m = grid.len();
    let mut pos = vec![0u64; m + 1];
    let mut neg = vec![0u64; m + 1];
    for (&pv, &rv) in p.data().iter().zip(r.data()) {
        let k = grid.partition_point(|&t| t <= pv);
        if rv != 0 {
            pos[k] += 1;
        } else {
            neg[k] += 1;
        }
    }
    let (total_pos, total_neg): (u64, u64) = (pos.iter().sum(), neg.iter().sum());
    let mut out = vec![ConfusionCounts::default(); m];
    let (mut tp, mut fp) = (0u64, 0u64);
    // threshold j is cleared by every pixel with k > j
    for j in (0..m).rev() {
        tp += pos[j + 1];
        fp += neg[j + 1];
        out[j] = ConfusionCounts {
            tp,
            fp,
            fn_: total_pos - tp,
            tn: total_neg - fp,
        };
    }
    out
}

/// Index of the best F1; ties go to the earliest (smallest) threshold.
fn argmax_f1(counts: &[ConfusionCounts]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in counts.iter().enumerate() {
        let f = prf_iou(c).f1;
        if f > best.1 {
            best = (i, f);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ods {
    pub threshold: f64,
    pub f1: f64,
}

fn check_dataset<T: Real>(dataset: &[(Raster<T>, Mask)]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::param("dataset is empty"));
    }
    dataset.iter().try_for_each(|(p, r)| check_pair(p, r))
}

/// Optimal dataset scale: the grid threshold maximizing F1 of the counts
/// summed over all images.
pub fn ods<T: Real>(dataset: &[(Raster<T>, Mask)], grid: &[T]) -> Result<Ods> {
    check_dataset(dataset)?;
    let grid = sorted_grid(grid)?;
    let per_image: Vec<_> = dataset
        .par_iter()
        .map(|(p, r)| sweep_counts(p, r, &grid))
        .collect();
    let summed = sum_curves(&per_image, grid.len());
    let (i, f1) = argmax_f1(&summed);
    Ok(Ods {
        threshold: grid[i].as_f64(),
        f1,
    })
}

fn sum_curves(curves: &[Vec<ConfusionCounts>], m: usize) -> Vec<ConfusionCounts> {
    (0..m).map(|j| curves.iter().map(|c| c[j]).sum()).collect()
}

/// Optimal image scale: mean over images of each image's best grid F1.
pub fn ois<T: Real>(dataset: &[(Raster<T>, Mask)], grid: &[T]) -> Result<f64> {
    check_dataset(dataset)?;
    let grid = sorted_grid(grid)?;
    let best: Vec<f64> = dataset
        .par_iter()
        .map(|(p, r)| argmax_f1(&sweep_counts(p, r, &grid)).1)
        .collect();
    Ok(best.iter().sum::<f64>() / best.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerImage {
    pub id: String,
    pub best_threshold: f64,
    pub best_f1: f64,
    /// Counts at the report's fixed threshold.
    pub counts: ConfusionCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub ods: Ods,
    pub ois: f64,
    pub per_image: Vec<PerImage>,
}

impl MetricsReport {
    /// Summed counts at the fixed threshold.
    pub fn total_counts(&self) -> ConfusionCounts {
        self.per_image.iter().map(|p| p.counts).sum()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "Precision", "Recall", "F1-score", "IoU", "ODS", "OIS"
        )?;
        writeln!(
            f,
            "{:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            self.precision, self.recall, self.f1, self.iou, self.ods.f1, self.ois
        )?;
        write!(
            f,
            "threshold {:.2}, ODS threshold {:.2}, {} images",
            self.threshold,
            self.ods.threshold,
            self.per_image.len()
        )
    }
}

/// Full report over named `(id, prediction, mask)` triples. Per-image
/// records are sorted by id, so the report does not depend on input order.
pub fn evaluate_maps<T: Real>(
    items: &[(String, Raster<T>, Mask)],
    threshold: T,
    grid: &[T],
) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(Error::param("nothing to evaluate"));
    }
    check_threshold(threshold)?;
    let grid = sorted_grid(grid)?;
    let mut rows: Vec<(PerImage, Vec<ConfusionCounts>)> = items
        .par_iter()
        .map(|(id, p, r)| {
            check_pair(p, r)?;
            let curve = sweep_counts(p, r, &grid);
            let (i, best_f1) = argmax_f1(&curve);
            let row = PerImage {
                id: id.clone(),
                best_threshold: grid[i].as_f64(),
                best_f1,
                counts: confusion(p, r, threshold)?,
            };
            Ok((row, curve))
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let curves: Vec<_> = rows.iter().map(|r| r.1.clone()).collect();
    let (i, ods_f1) = argmax_f1(&sum_curves(&curves, grid.len()));
    let per_image: Vec<PerImage> = rows.into_iter().map(|r| r.0).collect();
    let ois = per_image.iter().map(|p| p.best_f1).sum::<f64>() / per_image.len() as f64;
    let total: ConfusionCounts = per_image.iter().map(|p| p.counts).sum();
    let s = prf_iou(&total);
    Ok(MetricsReport {
        threshold: threshold.as_f64(),
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        iou: s.iou,
        ods: Ods {
            threshold: grid[i].as_f64(),
            f1: ods_f1,
        },
        ois,
        per_image,
    })
}

/// Evaluates `<pred_dir>/<id>.png` 16-bit probability maps against the
/// masks of every manifest entry.
pub fn evaluate(
    pred_dir: &Path,
    manifest_path: &Path,
    threshold: f64,
    grid: &[f64],
) -> Result<MetricsReport> {
    let manifest = datasetio::read_manifest(manifest_path)?;
    let (root, _) = datasetio::locate(manifest_path);
    evaluate_manifest(pred_dir, &root, &manifest, threshold, grid)
}

pub fn evaluate_manifest(
    pred_dir: &Path,
    root: &Path,
    manifest: &Manifest,
    threshold: f64,
    grid: &[f64],
) -> Result<MetricsReport> {
    let missing: Vec<String> = manifest
        .entries
        .iter()
        .filter(|e| !prediction_path(pred_dir, &e.id).exists())
        .map(|e| e.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let items = manifest
        .entries
        .par_iter()
        .map(|e| {
            let mask = datasetio::read_mask(&datasetio::resolve(root, &e.mask_path))?;
            let path = prediction_path(pred_dir, &e.id);
            let pred = datasetio::read_prob_png(&path)?;
            if pred.dims() != mask.dims() {
                return Err(Error::FileDimensions {
                    path,
                    expected: mask.dims(),
                    actual: pred.dims(),
                });
            }
            Ok((e.id.clone(), pred, mask))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_maps(&items, threshold, grid)
}

pub fn prediction_path(pred_dir: &Path, id: &str) -> std::path::PathBuf {
    pred_dir.join(format!("{id}.png"))
}
