//! Brute-force oracles and fixtures shared by the integration targets.
#![allow(dead_code)]

use pavesynth::cracksynth::CrackPath;
use pavesynth::rng;
use pavesynth::scene::SceneConfig;
use pavesynth::texturegen::TileSpec;
use pavesynth::{Mask, Raster};
use rand::Rng as _;

/// `(tp, fp, fn, tn)` by a plain per-pixel loop.
pub fn counts(p: &Raster<f64>, r: &Mask, t: f64) -> [u64; 4] {
    let mut c = [0u64; 4];
    for y in 0..p.height() {
        for x in 0..p.width() {
            let pred = p.get(x, y, 0) >= t;
            let gt = r.get(x, y, 0) == 1;
            let k = match (pred, gt) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            c[k] += 1;
        }
    }
    c
}

pub fn add(a: [u64; 4], b: [u64; 4]) -> [u64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

/// `(precision, recall, f1, iou)`; an empty prediction against an empty
/// ground truth scores 1 everywhere, other empty denominators score 0.
pub fn scores(c: [u64; 4]) -> [f64; 4] {
    let [tp, fp, fn_, _] = c.map(|v| v as f64);
    if tp + fp == 0.0 && tp + fn_ == 0.0 {
        return [1.0; 4];
    }
    let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let r = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    [p, r, f, tp / (tp + fp + fn_)]
}

/// Exhaustive ODS: recount every image at every threshold; first maximum wins.
pub fn ods(data: &[(Raster<f64>, Mask)], grid: &[f64]) -> (f64, f64) {
    let mut best = (grid[0], -1.0);
    for &t in grid {
        let total = data.iter().fold([0; 4], |acc, (p, r)| add(acc, counts(p, r, t)));
        let f = scores(total)[2];
        if f > best.1 {
            best = (t, f);
        }
    }
    best
}

pub fn ois(data: &[(Raster<f64>, Mask)], grid: &[f64]) -> f64 {
    let per: Vec<f64> = data
        .iter()
        .map(|(p, r)| {
            grid.iter()
                .map(|&t| scores(counts(p, r, t))[2])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

/// Random probability map and mask; values are quantized to hundredths
/// half the time so that ties with grid thresholds occur.
pub fn random_pair(g: &mut rng::Rng, w: usize, h: usize) -> (Raster<f64>, Mask) {
    let quantize = g.random_bool(0.5);
    let density = g.random_range(0.0..0.6);
    let p = Raster::from_fn(w, h, 1, |_, _, _| {
        let v: f64 = g.random();
        if quantize {
            (v * 100.0).round() / 100.0
        } else {
            v
        }
    });
    let r = Mask::from_fn(w, h, 1, |_, _, _| g.random_bool(density) as u8);
    (p, r)
}

/// Central differences of `f` with respect to every pixel of `p`.
pub fn finite_diff(p: &Raster<f64>, step: f64, f: impl Fn(&Raster<f64>) -> f64) -> Vec<f64> {
    (0..p.data().len())
        .map(|i| {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi.data_mut()[i] += step;
            lo.data_mut()[i] -= step;
            (f(&hi) - f(&lo)) / (2.0 * step)
        })
        .collect()
}

/// Generalized Dice overlap ratio `(2 num + eps) / (den + eps)` by direct
/// summation over both classes; the loss is `1 - ratio`. Differencing the
/// ratio stays accurate when an empty class pushes the loss to 1 - 1e-14.
pub fn dice_ratio(p: &[f64], r: &[u8], eps: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for fg in [true, false] {
        let rl: Vec<f64> = r.iter().map(|&v| if (v == 1) == fg { 1.0 } else { 0.0 }).collect();
        let pl: Vec<f64> = p.iter().map(|&v| if fg { v } else { 1.0 - v }).collect();
        let vol = rl.iter().sum::<f64>().max(eps);
        let w = 1.0 / (vol * vol);
        num += w * rl.iter().zip(&pl).map(|(a, b)| a * b).sum::<f64>();
        den += w * rl.iter().zip(&pl).map(|(a, b)| a + b).sum::<f64>();
    }
    (2.0 * num + eps) / (den + eps)
}

/// Largest relative gradient error, skipping pixels where both are zero.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs().max(n.abs()) > 0.0)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}

fn segment_dist(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let l2 = vx * vx + vy * vy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * vx + (py - a.1) * vy) / l2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * vx, a.1 + t * vy);
    ((px - qx) * (px - qx) + (py - qy) * (py - qy), t)
}

/// Segment endpoints and their widths.
type Capsule = ((f64, f64), (f64, f64), f64, f64);

fn collect_capsules(path: &CrackPath<f64>, out: &mut Vec<Capsule>) {
    for i in 1..path.vertices.len() {
        let (a, b) = (path.vertices[i - 1], path.vertices[i]);
        out.push(((a.x, a.y), (b.x, b.y), path.widths[i - 1], path.widths[i]));
    }
    for br in &path.branches {
        collect_capsules(&br.path, out);
    }
}

/// Every pixel center against every capsule of the tree.
pub fn capsule_oracle(path: &CrackPath<f64>, gsd: f64, w: usize, h: usize) -> Mask {
    let mut caps = Vec::new();
    collect_capsules(path, &mut caps);
    Mask::from_fn(w, h, 1, |x, y, _| {
        let (px, py) = ((x as f64 + 0.5) * gsd, (y as f64 + 0.5) * gsd);
        caps.iter().any(|&(a, b, wa, wb)| {
            let (d2, t) = segment_dist(px, py, a, b);
            let half = (wa + t * (wb - wa)) / 2.0;
            d2 <= half * half
        }) as u8
    })
}

/// Reduced scene: 256x160 px at 2 cm/px on 2 m tiles.
pub fn small_scene(seed: u64) -> SceneConfig {
    SceneConfig {
        image_size: (256, 160),
        gsd: 0.02,
        tile_spec: TileSpec {
            size_m: 2.0,
            ..TileSpec::default()
        },
        crack_length_m: (1.0, 1.6),
        seed,
        ..SceneConfig::synthetic_v1()
    }
}

/// Pixels whose 3x3 neighborhood contains both mask values.
pub fn boundary_band(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    Mask::from_fn(w, h, 1, |x, y, _| {
        let v = mask.get(x, y, 0);
        let mut edge = false;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    edge |= mask.get(nx as usize, ny as usize, 0) != v;
                }
            }
        }
        edge as u8
    })
}

/// Pixels where the thresholded image disagrees with the mask, outside the
/// mask's 1-px boundary band.
pub fn disagreements_off_band(image: &Raster<f32>, mask: &Mask) -> usize {
    let band = boundary_band(mask);
    let (w, h) = mask.dims();
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let img_on = image.get(x, y, 0) > 0.5;
            if img_on != (mask.get(x, y, 0) == 1) && band.get(x, y, 0) == 0 {
                n += 1;
            }
        }
    }
    n
}
