//! Deterministic synthetic pavement-crack datasets: procedural crack
//! rendering, joint image/mask augmentation, segmentation losses with
//! analytic gradients, and threshold-sweeping segmentation metrics.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod baseline;
pub mod config;
pub mod cracksynth;
pub mod datasetio;
pub mod error;
pub mod lossfn;
pub mod raster;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod segmetrics;
pub mod texturegen;

pub use error::{Error, Result};
pub use raster::{Mask, Raster};
pub use scalar::Real;

/// RGB image in [0, 1].
pub type Image = Raster<f32>;
/// Per-pixel defect probability, single channel.
pub type ProbabilityMap<T = f64> = Raster<T>;

pub type CrackParamsF32 = cracksynth::CrackParams<f32>;
pub type CrackParamsF64 = cracksynth::CrackParams<f64>;
pub type CrackPathF32 = cracksynth::CrackPath<f32>;
pub type CrackPathF64 = cracksynth::CrackPath<f64>;
pub type LossValueF32 = lossfn::LossValue<f32>;
pub type LossValueF64 = lossfn::LossValue<f64>;
