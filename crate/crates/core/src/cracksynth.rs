//! Procedural crack skeletons and their binary opacity rasters.
//!
//! A crack is grown as a heading random walk. Branches split off interior
//! vertices and take part of the parent's remaining step budget, so the
//! whole tree always has exactly `round(target / step)` segments of equal
//! length and its total length equals the target.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Mask;
use crate::rng::{self, Rng};
use crate::scalar::Real;

const BRANCH_ANGLE_MIN_DEG: f64 = 20.0;
const BRANCH_ANGLE_MAX_DEG: f64 = 70.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrackParams<T> {
    pub step_length_m: T,
    /// Standard deviation of the per-step heading change, radians.
    pub heading_jitter_rad: T,
    /// `(min, max)` crack width in meters.
    pub width_range_m: (T, T),
    /// Relative per-vertex width noise.
    pub width_jitter: T,
    pub branch_prob: T,
    pub max_branch_depth: usize,
    pub target_length_m: T,
    /// Narrow both ends of every polyline to the minimum width.
    pub taper_tips: bool,
}

impl<T: Real> Default for CrackParams<T> {
    fn default() -> Self {
        CrackParams {
            step_length_m: T::lit(0.05),
            heading_jitter_rad: T::lit(0.25),
            width_range_m: (T::lit(0.04), T::lit(0.13)),
            width_jitter: T::lit(0.3),
            branch_prob: T::lit(0.02),
            max_branch_depth: 2,
            target_length_m: T::lit(3.0),
            taper_tips: true,
        }
    }
}

impl<T: Real> CrackParams<T> {
    pub fn validate(&self) -> Result<()> {
        let (wmin, wmax) = self.width_range_m;
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::param(msg)) };
        check(
            self.step_length_m > T::zero() && self.step_length_m.is_finite(),
            "step_length_m must be > 0",
        )?;
        check(
            self.heading_jitter_rad >= T::zero() && self.heading_jitter_rad.is_finite(),
            "heading_jitter_rad must be >= 0",
        )?;
        check(wmin > T::zero(), "width_range_m.0 must be > 0")?;
        check(wmin <= wmax && wmax.is_finite(), "width_range_m.0 must be <= width_range_m.1")?;
        check(
            self.width_jitter >= T::zero() && self.width_jitter.is_finite(),
            "width_jitter must be >= 0",
        )?;
        check(
            self.branch_prob >= T::zero() && self.branch_prob < T::one(),
            "branch_prob must be in [0, 1)",
        )?;
        check(
            self.target_length_m > T::zero() && self.target_length_m.is_finite(),
            "target_length_m must be > 0",
        )?;
        Ok(())
    }

    /// Multiplies every metric quantity by `k`.
    pub fn scaled(&self, k: T) -> Self {
        CrackParams {
            step_length_m: self.step_length_m * k,
            width_range_m: (self.width_range_m.0 * k, self.width_range_m.1 * k),
            target_length_m: self.target_length_m * k,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Point { x, y }
    }

    fn dist(self, o: Self) -> T {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch<T> {
    /// Index of the parent vertex the branch starts from.
    pub attach: usize,
    pub path: CrackPath<T>,
}

/// Crack skeleton in meters. Coordinates are in the frame of whatever canvas
/// the path is later rasterized into.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrackPath<T> {
    pub vertices: Vec<Point<T>>,
    pub widths: Vec<T>,
    pub branches: Vec<Branch<T>>,
}

/// One tapered capsule: segment endpoints and their widths.
#[derive(Clone, Copy, Debug)]
pub struct Segment<T> {
    pub a: Point<T>,
    pub b: Point<T>,
    pub wa: T,
    pub wb: T,
}

impl<T: Real> Segment<T> {
    /// Pixel-center-in-capsule test: distance from `p` to the segment against
    /// half the width interpolated at the closest point.
    #[inline]
    pub fn covers(&self, p: Point<T>) -> bool {
        let (dx, dy) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > T::zero() {
            (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2)
                .max(T::zero())
                .min(T::one())
        } else {
            T::zero()
        };
        let qx = self.a.x + t * dx;
        let qy = self.a.y + t * dy;
        let d2 = (p.x - qx) * (p.x - qx) + (p.y - qy) * (p.y - qy);
        let half = (self.wa + t * (self.wb - self.wa)) / T::lit(2.0);
        d2 <= half * half
    }
}

impl<T: Real> CrackPath<T> {
    /// Length of the whole tree, branches included.
    pub fn total_length(&self) -> T {
        let own = self
            .vertices
            .windows(2)
            .fold(T::zero(), |acc, w| acc + w[0].dist(w[1]));
        self.branches
            .iter()
            .fold(own, |acc, b| acc + b.path.total_length())
    }

    /// Branch nesting depth; an unbranched path has depth 0.
    pub fn depth(&self) -> usize {
        self.branches
            .iter()
            .map(|b| 1 + b.path.depth())
            .max()
            .unwrap_or(0)
    }

    /// All segments of the tree in depth-first order.
    pub fn segments(&self) -> Vec<Segment<T>> {
        let mut out = Vec::new();
        self.collect_segments(&mut out);
        out
    }

    fn collect_segments(&self, out: &mut Vec<Segment<T>>) {
        for i in 1..self.vertices.len() {
            out.push(Segment {
                a: self.vertices[i - 1],
                b: self.vertices[i],
                wa: self.widths[i - 1],
                wb: self.widths[i],
            });
        }
        for b in &self.branches {
            b.path.collect_segments(out);
        }
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        CrackPath {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point::new(p.x + dx, p.y + dy))
                .collect(),
            widths: self.widths.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| Branch {
                    attach: b.attach,
                    path: b.path.translated(dx, dy),
                })
                .collect(),
        }
    }

    /// Axis-aligned bounds `(min, max)` including half-widths.
    pub fn bounds(&self) -> (Point<T>, Point<T>) {
        let mut lo = Point::new(T::infinity(), T::infinity());
        let mut hi = Point::new(T::neg_infinity(), T::neg_infinity());
        for s in self.segments() {
            let h = s.wa.max(s.wb) / T::lit(2.0);
            lo.x = lo.x.min(s.a.x.min(s.b.x) - h);
            lo.y = lo.y.min(s.a.y.min(s.b.y) - h);
            hi.x = hi.x.max(s.a.x.max(s.b.x) + h);
            hi.y = hi.y.max(s.a.y.max(s.b.y) + h);
        }
        (lo, hi)
    }

    /// Checks the structural invariants: at least two vertices, one positive
    /// width per vertex, branch attachment inside the parent.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 2 {
            return Err(Error::Data("crack path needs at least 2 vertices".into()));
        }
        if self.widths.len() != self.vertices.len() || self.widths.iter().any(|&w| w <= T::zero())
        {
            return Err(Error::Data("crack widths must be positive, one per vertex".into()));
        }
        for b in &self.branches {
            if b.attach >= self.vertices.len() {
                return Err(Error::Data(format!(
                    "branch attached at {} outside {} vertices",
                    b.attach,
                    self.vertices.len()
                )));
            }
            b.path.validate()?;
        }
        Ok(())
    }
}

/// Grows a crack skeleton rooted at the origin with a uniformly random heading.
pub fn generate_crack<T: Real>(seed: u64, params: &CrackParams<T>) -> Result<CrackPath<T>> {
    let mut rng = rng::rng_from(rng::mix(seed, rng::stream::CRACK));
    let heading = rng.random::<f64>() * std::f64::consts::TAU;
    generate_crack_with_heading(&mut rng, params, T::lit(heading))
}

/// Same as [`generate_crack`] but with a caller-chosen initial heading.
pub fn generate_crack_with_heading<T: Real>(
    rng: &mut Rng,
    params: &CrackParams<T>,
    heading: T,
) -> Result<CrackPath<T>> {
    params.validate()?;
    let steps = (params.target_length_m / params.step_length_m)
        .round()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let step = params.target_length_m / T::from_usize(steps).unwrap();
    let wmax = params.width_range_m.1;
    Ok(grow(
        rng,
        params,
        Point::new(T::zero(), T::zero()),
        heading,
        steps,
        step,
        0,
        wmax,
    ))
}

#[allow(clippy::too_many_arguments)]
fn grow<T: Real>(
    rng: &mut Rng,
    params: &CrackParams<T>,
    start: Point<T>,
    mut heading: T,
    steps: usize,
    step: T,
    depth: usize,
    width_cap: T,
) -> CrackPath<T> {
    let (wmin, _) = params.width_range_m;
    let base = wmin + T::lit(rng.random::<f64>()) * (width_cap - wmin);

    let mut vertices = vec![start];
    let mut branches = Vec::new();
    let mut remaining = steps;
    while remaining > 0 {
        if params.heading_jitter_rad > T::zero() {
            let n: f64 = StandardNormal.sample(rng);
            heading = heading + params.heading_jitter_rad * T::lit(n);
        }
        let last = *vertices.last().unwrap();
        let next = Point::new(
            last.x + step * heading.cos(),
            last.y + step * heading.sin(),
        );
        vertices.push(next);
        remaining -= 1;

        if depth < params.max_branch_depth
            && remaining >= 2
            && params.branch_prob > T::zero()
            && T::lit(rng.random::<f64>()) < params.branch_prob
        {
            let k = 1 + rng.random_range(0..remaining / 2);
            remaining -= k;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let offset = rng.random_range(BRANCH_ANGLE_MIN_DEG..=BRANCH_ANGLE_MAX_DEG).to_radians();
            let child = grow(
                rng,
                params,
                next,
                heading + T::lit(sign * offset),
                k,
                step,
                depth + 1,
                base,
            );
            branches.push(Branch {
                attach: vertices.len() - 1,
                path: child,
            });
        }
    }

    let (lo, hi) = params.width_range_m;
    let mut widths: Vec<T> = (0..vertices.len())
        .map(|_| {
            let u = T::lit(rng.random_range(-1.0..=1.0));
            (base * (T::one() + params.width_jitter * u)).max(lo).min(hi)
        })
        .collect();
    if params.taper_tips {
        widths[0] = lo;
        *widths.last_mut().unwrap() = lo;
    }

    CrackPath {
        vertices,
        widths,
        branches,
    }
}

/// Rasterized crack plus a flag raised when no pixel was hit.
#[derive(Clone, Debug, PartialEq)]
pub struct CrackRaster {
    pub mask: Mask,
    pub empty: bool,
}

/// Rasterizes `path` onto a `width x height` canvas whose top-left corner is
/// the path's origin, with `gsd` meters per pixel.
pub fn rasterize_crack<T: Real>(
    path: &CrackPath<T>,
    gsd: T,
    width: usize,
    height: usize,
) -> Result<CrackRaster> {
    rasterize_window(path, gsd, 0, 0, width, height)
}

/// Rasterizes the window `[x0, x0 + width) x [y0, y0 + height)` of the pixel
/// grid anchored at the path origin.
pub fn rasterize_window<T: Real>(
    path: &CrackPath<T>,
    gsd: T,
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
) -> Result<CrackRaster> {
    if !(gsd > T::zero()) {
        return Err(Error::param("gsd must be > 0"));
    }
    if width == 0 || height == 0 {
        return Err(Error::param("canvas must be nonempty"));
    }
    let mut mask = Mask::filled(width, height, 1, 0);
    let half = T::lit(0.5);
    for seg in path.segments() {
        let r = seg.wa.max(seg.wb) / T::lit(2.0);
        // Candidate pixels: centers inside the segment bbox grown by the radius.
        let px_range = |lo: T, hi: T, origin: i64, n: usize| -> Option<(usize, usize)> {
            let a = ((lo - r) / gsd - half).floor().to_f64()? as i64 - 1 - origin;
            let b = ((hi + r) / gsd - half).ceil().to_f64()? as i64 + 1 - origin;
            let a = a.max(0);
            let b = b.min(n as i64 - 1);
            (a <= b).then_some((a as usize, b as usize))
        };
        let Some((xa, xb)) = px_range(seg.a.x.min(seg.b.x), seg.a.x.max(seg.b.x), x0, width)
        else {
            continue;
        };
        let Some((ya, yb)) = px_range(seg.a.y.min(seg.b.y), seg.a.y.max(seg.b.y), y0, height)
        else {
            continue;
        };
        for y in ya..=yb {
            let cy = (T::lit((y as i64 + y0) as f64) + half) * gsd;
            for x in xa..=xb {
                if mask.get(x, y, 0) != 0 {
                    continue;
                }
                let cx = (T::lit((x as i64 + x0) as f64) + half) * gsd;
                if seg.covers(Point::new(cx, cy)) {
                    mask.set(x, y, 0, 1);
                }
            }
        }
    }
    let empty = mask.count_ones() == 0;
    Ok(CrackRaster { mask, empty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent brute force: every pixel against every segment, using the
    /// explicit distance rather than the squared comparison.
    fn capsule_oracle(path: &CrackPath<f64>, gsd: f64, w: usize, h: usize) -> Mask {
        let segs = path.segments();
        Mask::from_fn(w, h, 1, |x, y, _| {
            let px = (x as f64 + 0.5) * gsd;
            let py = (y as f64 + 0.5) * gsd;
            let hit = segs.iter().any(|s| {
                let vx = s.b.x - s.a.x;
                let vy = s.b.y - s.a.y;
                let l2 = vx * vx + vy * vy;
                let t = if l2 == 0.0 {
                    0.0
                } else {
                    (((px - s.a.x) * vx + (py - s.a.y) * vy) / l2).clamp(0.0, 1.0)
                };
                let (qx, qy) = (s.a.x + t * vx, s.a.y + t * vy);
                let d2 = (px - qx) * (px - qx) + (py - qy) * (py - qy);
                let hw = (s.wa + t * (s.wb - s.wa)) / 2.0;
                d2 <= hw * hw
            });
            hit as u8
        })
    }

    fn straight(a: (f64, f64), b: (f64, f64), w: f64) -> CrackPath<f64> {
        CrackPath {
            vertices: vec![Point::new(a.0, a.1), Point::new(b.0, b.1)],
            widths: vec![w, w],
            branches: vec![],
        }
    }

    #[test]
    fn horizontal_segment_matches_oracle() {
        let path = straight((0.5, 0.6), (2.5, 0.6), 0.1);
        let r = rasterize_crack(&path, 0.01, 300, 120).unwrap();
        let oracle = capsule_oracle(&path, 0.01, 300, 120);
        assert_eq!(r.mask.count_ones(), oracle.count_ones());
        assert_eq!(r.mask, oracle);
        assert!(!r.empty);
    }

    #[test]
    fn outside_path_gives_empty_flag() {
        let path = straight((10.0, 10.0), (12.0, 10.0), 0.1);
        let r = rasterize_crack(&path, 0.01, 64, 64).unwrap();
        assert!(r.empty);
        assert_eq!(r.mask.count_ones(), 0);
    }

    #[test]
    fn thin_stroke_is_visible() {
        let path = straight((0.05, 0.105), (0.5, 0.105), 0.02);
        let r = rasterize_crack(&path, 0.01, 64, 32).unwrap();
        assert!(r.mask.count_ones() > 0);
        assert_eq!(r.mask, capsule_oracle(&path, 0.01, 64, 32));
    }

    #[test]
    fn rejects_bad_params() {
        let p = CrackParams::<f64> {
            step_length_m: 0.0,
            ..Default::default()
        };
        assert!(matches!(generate_crack(1, &p), Err(Error::Param(m)) if m.contains("step_length_m")));
        let p = CrackParams::<f64> {
            width_range_m: (0.05, 0.01),
            ..Default::default()
        };
        assert!(generate_crack(1, &p).is_err());
        let p = CrackParams::<f64> {
            branch_prob: 1.0,
            ..Default::default()
        };
        assert!(matches!(generate_crack(1, &p), Err(Error::Param(m)) if m.contains("branch_prob")));
        assert!(rasterize_crack(&straight((0., 0.), (1., 0.), 0.1), 0.0, 4, 4).is_err());
        assert!(rasterize_crack(&straight((0., 0.), (1., 0.), 0.1), 0.1, 0, 4).is_err());
    }

    #[test]
    fn no_branching_no_jitter_gives_constant_widths() {
        let p = CrackParams {
            branch_prob: 0.0,
            width_jitter: 0.0,
            taper_tips: false,
            ..CrackParams::<f64>::default()
        };
        let c = generate_crack(3, &p).unwrap();
        assert!(c.branches.is_empty());
        assert!(c.widths.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn zero_heading_jitter_is_collinear() {
        let p = CrackParams {
            heading_jitter_rad: 0.0,
            branch_prob: 0.0,
            ..CrackParams::<f64>::default()
        };
        let c = generate_crack(11, &p).unwrap();
        let (a, b) = (c.vertices[0], c.vertices[1]);
        for v in &c.vertices[2..] {
            let cross = (b.x - a.x) * (v.y - a.y) - (b.y - a.y) * (v.x - a.x);
            assert!(cross.abs() < 1e-9, "{cross}");
        }
    }

    #[test]
    fn same_seed_same_path() {
        let p = CrackParams::<f64> {
            branch_prob: 0.2,
            ..Default::default()
        };
        let a = generate_crack(7, &p).unwrap();
        let b = generate_crack(7, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        assert_ne!(a, generate_crack(8, &p).unwrap());
    }

    #[test]
    fn works_in_single_precision() {
        let p = CrackParams::<f32>::default();
        let c = generate_crack(5, &p).unwrap();
        c.validate().unwrap();
        let len = c.total_length();
        assert!((len - 3.0).abs() < 1e-3);
        let r = rasterize_crack(&c.translated(2.0, 2.0), 0.01f32, 400, 400).unwrap();
        assert!(!r.empty);
    }

    fn arb_params() -> impl Strategy<Value = CrackParams<f64>> {
        (
            0.01f64..0.2,
            0.0f64..0.6,
            0.005f64..0.05,
            1.0f64..3.0,
            0.0f64..0.5,
            0.0f64..0.3,
            0usize..4,
            0.2f64..6.0,
        )
            .prop_map(|(step, hj, wmin, wr, wj, bp, depth, len)| CrackParams {
                step_length_m: step,
                heading_jitter_rad: hj,
                width_range_m: (wmin, wmin * wr),
                width_jitter: wj,
                branch_prob: bp,
                max_branch_depth: depth,
                target_length_m: len.max(step),
                taper_tips: true,
            })
    }

    proptest! {
        #[test]
        fn generated_paths_satisfy_contract(seed in any::<u64>(), p in arb_params()) {
            let c = generate_crack(seed, &p).unwrap();
            c.validate().unwrap();
            let len = c.total_length();
            prop_assert!(len >= 0.9 * p.target_length_m && len <= 1.1 * p.target_length_m,
                "length {} target {}", len, p.target_length_m);
            prop_assert!(c.depth() <= p.max_branch_depth);
            let (lo, hi) = p.width_range_m;
            fn widths_ok(c: &CrackPath<f64>, lo: f64, hi: f64) -> bool {
                c.widths.iter().all(|&w| w >= lo && w <= hi)
                    && c.branches.iter().all(|b| widths_ok(&b.path, lo, hi))
            }
            prop_assert!(widths_ok(&c, lo, hi));
        }

        #[test]
        fn raster_matches_oracle_on_random_paths(seed in any::<u64>(), p in arb_params(),
                                                 ox in 0.0f64..1.0, oy in 0.0f64..1.0) {
            let gsd = 0.02;
            let c = generate_crack(seed, &p).unwrap().translated(ox, oy);
            let r = rasterize_crack(&c, gsd, 48, 40).unwrap();
            prop_assert_eq!(r.mask, capsule_oracle(&c, gsd, 48, 40));
        }

        #[test]
        fn raster_is_scale_invariant(seed in any::<u64>(), p in arb_params(),
                                     k in prop::sample::select(vec![0.25f64, 0.5, 2.0, 4.0])) {
            let gsd = 0.02;
            let a = generate_crack(seed, &p).unwrap().translated(0.5, 0.5);
            let b = generate_crack(seed, &p.scaled(k)).unwrap().translated(0.5 * k, 0.5 * k);
            let ra = rasterize_crack(&a, gsd, 64, 64).unwrap();
            let rb = rasterize_crack(&b, gsd * k, 64, 64).unwrap();
            prop_assert_eq!(ra.mask, rb.mask);
        }
    }
}
