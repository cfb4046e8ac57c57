//! Classical crack detector: scores how much darker each pixel is than its
//! neighborhood, in units of the local standard deviation, and squashes the
//! score through a logistic.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasetio;
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::Real;

const STD_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Odd side length of the square neighborhood.
    pub window_px: usize,
    /// Logistic gain.
    pub k: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            window_px: 31,
            k: 4.0,
        }
    }
}

/// Summed-area table with a zero first row and column.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(gray: &[f64], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        let mut sq = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..w {
                let v = gray[y * w + x];
                rs += v;
                rq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Integral { stride, sum, sq }
    }

    /// Sum and squared sum over `[x0, x1) x [y0, y1)`.
    fn window(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let s = self.stride;
        let at = |t: &[f64], x: usize, y: usize| t[y * s + x];
        let f = |t: &[f64]| at(t, x1, y1) - at(t, x0, y1) - at(t, x1, y0) + at(t, x0, y0);
        (f(&self.sum), f(&self.sq))
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Probability map in [0, 1] with the image's dimensions. Windows are
/// clipped at the image border.
pub fn baseline_segment<T: Real>(image: &Raster<T>, params: &BaselineParams) -> Result<Raster<T>> {
    if params.window_px < 3 || params.window_px.is_multiple_of(2) {
        return Err(Error::param("window_px must be odd and >= 3"));
    }
    if !(params.k.is_finite()) {
        return Err(Error::param("k must be finite"));
    }
    if image.is_empty() {
        return Err(Error::param("image is empty"));
    }
    let gray: Vec<f64> = image.luminance().data().iter().map(|v| v.as_f64()).collect();
    let (w, h) = image.dims();
    let table = Integral::new(&gray, w, h);
    let r = params.window_px / 2;
    let mut out = Raster::filled(w, h, 1, T::zero());
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let (s, q) = table.window(x0, y0, x1, y1);
            let mean = s / n;
            let std = (q / n - mean * mean).max(0.0).sqrt().max(STD_FLOOR);
            let d = (mean - gray[y * w + x]).max(0.0) / std;
            out.set(x, y, 0, T::lit(logistic(params.k * (d - 1.0))));
        }
    }
    Ok(out)
}

/// File listing the predictions written by [`predict_dataset`].
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    /// Relative to the prediction directory.
    pub path: String,
    pub width: usize,
    pub height: usize,
}

/// Segments every manifest image into `<out_dir>/<id>.png` (16-bit) and
/// lists them in `predictions.jsonl`.
pub fn predict_dataset(
    manifest_path: &Path,
    out_dir: &Path,
    params: &BaselineParams,
    workers: usize,
) -> Result<Vec<PredictionRecord>> {
    let (root, _) = datasetio::locate(manifest_path);
    let manifest = datasetio::read_manifest(manifest_path)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::param(e.to_string()))?;
    let records: Vec<PredictionRecord> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| {
                let image = datasetio::read_rgb(&datasetio::resolve(&root, &e.image_path))?;
                let prob = baseline_segment(&image, params)?;
                let path = format!("{}.png", e.id);
                datasetio::write_prob_png(&out_dir.join(&path), &prob)?;
                Ok(PredictionRecord {
                    id: e.id.clone(),
                    path,
                    width: prob.width(),
                    height: prob.height(),
                })
            })
            .collect::<Result<_>>()
    })?;
    let mut body = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut body, r).map_err(|e| Error::Data(e.to_string()))?;
        body.push(b'\n');
    }
    let list = out_dir.join(PREDICTIONS_FILE);
    fs::File::create(&list)
        .and_then(|mut f| f.write_all(&body))
        .map_err(|e| Error::io(&list, e))?;
    Ok(records)
}
