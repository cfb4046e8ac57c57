//! Segmentation losses with analytic gradients with respect to the
//! probability map: binary cross-entropy, two-class Generalised Dice, and
//! their weighted combination.
//!
//! Sums are accumulated in `f64` whatever the scalar type, so single
//! precision maps of full-HD size keep their accuracy.

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::scalar::Real;

/// Loss value and its gradient `dL/dp` per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub gradient: Raster<T>,
}

fn check_inputs<T: Real>(p: &Raster<T>, r: &Mask) -> Result<()> {
    p.ensure_same_dims(r)?;
    if p.channels() != 1 || r.channels() != 1 {
        return Err(Error::param("losses take single-channel rasters"));
    }
    if p.is_empty() {
        return Err(Error::param("losses need at least one pixel"));
    }
    Ok(())
}

fn gradient_raster<T: Real>(like: &Raster<T>, grad: impl Iterator<Item = f64>) -> Raster<T> {
    Raster::from_vec(
        like.width(),
        like.height(),
        1,
        grad.map(T::lit).collect(),
    )
    .expect("gradient has one value per pixel")
}

/// Mean binary cross-entropy with `p` clamped to `[eps, 1 - eps]`. The
/// gradient is zero where the clamp is active.
pub fn bce<T: Real>(p: &Raster<T>, r: &Mask, eps: T) -> Result<LossValue<T>> {
    check_inputs(p, r)?;
    let eps = eps.as_f64();
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::param("bce eps must be in (0, 0.5)"));
    }
    let n = p.data().len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(p.data().len());
    for (&pv, &rv) in p.data().iter().zip(r.data()) {
        let pv = pv.as_f64();
        let pc = pv.clamp(eps, 1.0 - eps);
        let clamped = pv < eps || pv > 1.0 - eps;
        if rv != 0 {
            total -= pc.ln();
            grad.push(if clamped { 0.0 } else { -1.0 / (pc * n) });
        } else {
            total -= (1.0 - pc).ln();
            grad.push(if clamped { 0.0 } else { 1.0 / ((1.0 - pc) * n) });
        }
    }
    Ok(LossValue {
        value: T::lit(total / n),
        gradient: gradient_raster(p, grad.into_iter()),
    })
}

/// Generalised Dice loss over the two classes {defect, background} with
/// class weights `1 / max(volume, eps)^2`:
///
/// ```text
/// num  = sum_l w_l sum_n r_ln p_ln
/// den  = sum_l w_l sum_n (r_ln + p_ln)
/// loss = 1 - (2 num + eps) / (den + eps)
/// ```
///
/// Background uses `1 - r` and `1 - p`. Since `2 r p <= r + p` on [0, 1]
/// the value stays in [0, 1], and it is exactly 0 for `p == r`.
pub fn generalized_dice<T: Real>(p: &Raster<T>, r: &Mask, eps: T) -> Result<LossValue<T>> {
    check_inputs(p, r)?;
    let eps = eps.as_f64();
    if !(eps > 0.0) {
        return Err(Error::param("dice eps must be > 0"));
    }
    let (mut vol1, mut vol0) = (0.0, 0.0);
    let (mut inter1, mut inter0) = (0.0, 0.0);
    let (mut sum1, mut sum0) = (0.0, 0.0);
    for (&pv, &rv) in p.data().iter().zip(r.data()) {
        let (p1, r1) = (pv.as_f64(), (rv != 0) as u8 as f64);
        let (p0, r0) = (1.0 - p1, 1.0 - r1);
        vol1 += r1;
        vol0 += r0;
        inter1 += r1 * p1;
        inter0 += r0 * p0;
        sum1 += r1 + p1;
        sum0 += r0 + p0;
    }
    let w1 = 1.0 / vol1.max(eps).powi(2);
    let w0 = 1.0 / vol0.max(eps).powi(2);
    let num = w1 * inter1 + w0 * inter0;
    let den = w1 * sum1 + w0 * sum0;
    let top = 2.0 * num + eps;
    let bot = den + eps;
    let value = 1.0 - top / bot;

    let dden = w1 - w0;
    let grad = r.data().iter().map(|&rv| {
        let dnum = if rv != 0 { w1 } else { -w0 };
        -(2.0 * dnum * bot - top * dden) / (bot * bot)
    });
    Ok(LossValue {
        value: T::lit(value),
        gradient: gradient_raster(p, grad),
    })
}

/// Weights and smoothing for [`combined_loss`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub dice: f64,
    pub bce: f64,
    pub eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            dice: 1.0,
            bce: 1.0,
            eps: 1e-7,
        }
    }
}

/// `dice * GDL + bce * BCE`, values and gradients alike.
pub fn combined_loss<T: Real>(
    p: &Raster<T>,
    r: &Mask,
    weights: LossWeights,
) -> Result<LossValue<T>> {
    let LossWeights { dice, bce: wb, eps } = weights;
    if !(dice >= 0.0 && wb >= 0.0) || (dice == 0.0 && wb == 0.0) {
        return Err(Error::param("loss weights must be >= 0 and not both zero"));
    }
    let gd = generalized_dice(p, r, T::lit(eps))?;
    let ce = bce(p, r, T::lit(eps))?;
    let (wd, wb) = (T::lit(dice), T::lit(wb));
    let gradient = gd
        .gradient
        .data()
        .iter()
        .zip(ce.gradient.data())
        .map(|(&a, &b)| wd * a + wb * b)
        .collect();
    Ok(LossValue {
        value: wd * gd.value + wb * ce.value,
        gradient: Raster::from_vec(p.width(), p.height(), 1, gradient)?,
    })
}
