//! Pluggable denoisers and demosaicers.

pub mod cnn;
pub mod ddnet;
pub mod demosaic;
pub mod nn;
pub mod train;
pub mod tv;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SciError};
use crate::model::{interleave, deinterleave, BayerComponents, VideoCube};
use crate::scalar::Real;

pub use cnn::{cnn_backward, cnn_forward, CnnDenoiser};
pub use ddnet::{ddnet_forward, DdnetParams, DdnetSpec};
pub use demosaic::{demosaic_bilinear, demosaic_malvar, BilinearDemosaicer, MalvarDemosaicer};
pub use nn::{Activation, ConvLayer, FeatureMap, PriorParams};
pub use train::{train_demosaic, train_demosaic_from, train_denoiser, TrainConfig, TrainReport};
pub use tv::{tv_denoise, TvDenoiser};

/// Scale of the noise levels handed to denoisers: `sigma` is expressed in
/// 8-bit units, so pixel-domain std is `sigma / 255`.
pub const SIGMA_SCALE: f64 = 255.0;

/// `v = D_sigma(input)`.
pub trait Denoiser<T: Real> {
    fn denoise(&self, input: &VideoCube<T>, sigma: T) -> Result<VideoCube<T>>;
    fn name(&self) -> String;
}

/// `x = D_M(mosaic)`: single-channel mosaic stack to RGB cube.
pub trait Demosaicer<T: Real> {
    fn demosaic(&self, mosaic: &VideoCube<T>) -> Result<VideoCube<T>>;
    fn name(&self) -> String;
}

/// Gradient of `<out_grad, D(input)>` with respect to the parameters
/// (flattened) and the input.
#[derive(Clone, Debug)]
pub struct PriorGradient<T> {
    pub params: Vec<T>,
    pub input: VideoCube<T>,
}

/// A denoiser whose weights can be read, replaced, and differentiated.
pub trait TrainableDenoiser<T: Real>: Denoiser<T> {
    fn parameters(&self) -> Vec<T>;
    fn set_parameters(&mut self, flat: &[T]) -> Result<()>;
    fn parameter_count(&self) -> usize;
    fn backward(&self, input: &VideoCube<T>, sigma: T, out_grad: &VideoCube<T>) -> Result<PriorGradient<T>>;
}

/// A demosaicer whose weights can be differentiated.
pub trait TrainableDemosaicer<T: Real>: Demosaicer<T> {
    fn parameters(&self) -> Vec<T>;
    fn set_parameters(&mut self, flat: &[T]) -> Result<()>;
    /// Flattened `d<out_grad, D_M(mosaic)>/dθ`.
    fn backward(&self, mosaic: &VideoCube<T>, out_grad: &VideoCube<T>) -> Result<Vec<T>>;
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityDenoiser;

impl<T: Real> Denoiser<T> for IdentityDenoiser {
    fn denoise(&self, input: &VideoCube<T>, _sigma: T) -> Result<VideoCube<T>> {
        Ok(input.clone())
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// Grayscale pass-through "demosaicer".
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityDemosaicer;

impl<T: Real> Demosaicer<T> for IdentityDemosaicer {
    fn demosaic(&self, mosaic: &VideoCube<T>) -> Result<VideoCube<T>> {
        Ok(mosaic.clone())
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// Applies an inner denoiser separately to the four half-resolution Bayer
/// components of a mosaic stack.
pub struct BayerComponentDenoiser<'a, T: Real> {
    pub inner: &'a dyn Denoiser<T>,
}

impl<T: Real> Denoiser<T> for BayerComponentDenoiser<'_, T> {
    fn denoise(&self, input: &VideoCube<T>, sigma: T) -> Result<VideoCube<T>> {
        let parts = interleave(input)?;
        let mut out = Vec::with_capacity(4);
        for c in &parts.components {
            out.push(self.inner.denoise(c, sigma)?);
        }
        let components: [VideoCube<T>; 4] = out
            .try_into()
            .map_err(|_| SciError::DimensionMismatch("four Bayer components".into()))?;
        deinterleave(&BayerComponents { components })
    }

    fn name(&self) -> String {
        format!("bayer({})", self.inner.name())
    }
}

/// Configuration-level description of a denoiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DenoiserSpec {
    Tv {
        weight: f64,
        iters: usize,
        /// Scale `weight` by `sigma / sigma_reference` when set.
        #[serde(default)]
        sigma_reference: Option<f64>,
    },
    Cnn { checkpoint: Option<String> },
    Identity,
    External { name: String },
}

impl DenoiserSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DenoiserSpec::Tv { weight, iters, .. } => {
                if !(*weight > 0.0) || *iters == 0 {
                    return Err(SciError::InvalidParameter(format!(
                        "TV weight must be > 0 and iters >= 1 (got {weight}, {iters})"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        DenoiserSpec::Tv {
            weight: tv::DEFAULT_TV_WEIGHT,
            iters: tv::DEFAULT_TV_ITERS,
            sigma_reference: None,
        }
    }
}
