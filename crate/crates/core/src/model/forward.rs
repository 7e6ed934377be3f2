//! The full SCI forward model `y = H T_M x + z`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cfa::CfaOperator;
use super::cube::{Plane, VideoCube};
use super::masks::MaskStack;
use crate::error::{Result, SciError};
use crate::scalar::Real;

/// Divisor floor used wherever `r_j` can vanish outside the ADMM penalties.
pub const GRAM_EPS: f64 = 1e-8;

/// Description of the additive measurement noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub model: String,
    pub std: f64,
}

impl NoiseRecord {
    pub fn gaussian(std: f64) -> Self {
        NoiseRecord {
            model: "gaussian".into(),
            std,
        }
    }
}

/// One coded snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement<T> {
    pub y: Plane<T>,
    pub noise: Option<NoiseRecord>,
    /// `true` when the frames were Bayer-mosaicked before modulation.
    pub mosaicked: bool,
}

impl<T: Real> Measurement<T> {
    pub fn new(y: Plane<T>, mosaicked: bool) -> Self {
        Measurement {
            y,
            noise: None,
            mosaicked,
        }
    }
}

/// Masks plus optional CFA: the operator `A = H T_M` and its adjoint.
#[derive(Clone, Copy, Debug)]
pub struct ForwardModel<'a, T> {
    pub masks: &'a MaskStack<T>,
    pub cfa: Option<&'a CfaOperator>,
}

impl<'a, T: Real> ForwardModel<'a, T> {
    pub fn new(masks: &'a MaskStack<T>, cfa: Option<&'a CfaOperator>) -> Result<Self> {
        if let Some(cfa) = cfa {
            if cfa.height() != masks.height() || cfa.width() != masks.width() {
                return Err(SciError::DimensionMismatch(format!(
                    "CFA {}x{} vs masks {}x{}",
                    cfa.height(),
                    cfa.width(),
                    masks.height(),
                    masks.width()
                )));
            }
        }
        Ok(ForwardModel { masks, cfa })
    }

    /// Number of channels of the scene domain.
    pub fn scene_channels(&self) -> usize {
        if self.cfa.is_some() {
            3
        } else {
            1
        }
    }

    /// `T_M x` (identity for grayscale).
    pub fn mosaic(&self, x: &VideoCube<T>) -> Result<VideoCube<T>> {
        match self.cfa {
            Some(cfa) => cfa.mosaic(x),
            None => {
                if x.channels() != 1 {
                    return Err(SciError::MissingCfa);
                }
                Ok(x.clone())
            }
        }
    }

    /// `T_M^T q` (identity for grayscale).
    pub fn mosaic_adjoint(&self, q: &VideoCube<T>) -> Result<VideoCube<T>> {
        match self.cfa {
            Some(cfa) => cfa.mosaic_adjoint(q),
            None => Ok(q.clone()),
        }
    }

    /// `H T_M x`.
    pub fn apply(&self, x: &VideoCube<T>) -> Result<Plane<T>> {
        self.masks.apply_h(&self.mosaic(x)?)
    }

    /// `T_M^T H^T y`.
    pub fn adjoint(&self, y: &Plane<T>) -> Result<VideoCube<T>> {
        self.mosaic_adjoint(&self.masks.adjoint_h(y)?)
    }

    /// `y - H T_M x`.
    pub fn residual(&self, y: &Plane<T>, x: &VideoCube<T>) -> Result<Plane<T>> {
        let hx = self.apply(x)?;
        if !hx.same_shape(y) {
            return Err(SciError::DimensionMismatch("measurement vs masks".into()));
        }
        let r: Vec<T> = y.as_slice().iter().zip(hx.as_slice()).map(|(&a, &b)| a - b).collect();
        Plane::from_vec(y.height(), y.width(), r)
    }
}

/// Simulates a snapshot: optional mosaicking, modulation, summation, and
/// i.i.d. Gaussian noise of standard deviation `noise_std`.
pub fn encode<T: Real, R: Rng + ?Sized>(
    video: &VideoCube<T>,
    masks: &MaskStack<T>,
    cfa: Option<&CfaOperator>,
    noise_std: f64,
    rng: &mut R,
) -> Result<Measurement<T>> {
    if video.channels() == 3 && cfa.is_none() {
        return Err(SciError::MissingCfa);
    }
    if video.channels() == 1 && cfa.is_some() {
        return Err(SciError::DimensionMismatch(
            "CFA given for a grayscale video".into(),
        ));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(SciError::InvalidParameter(format!("noise std {noise_std}")));
    }
    let model = ForwardModel::new(masks, cfa)?;
    let mut y = model.apply(video)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("valid std");
        for v in y.as_mut_slice() {
            *v += T::of(normal.sample(rng));
        }
    }
    Ok(Measurement {
        y,
        noise: Some(NoiseRecord::gaussian(noise_std)),
        mosaicked: cfa.is_some(),
    })
}

/// Least-norm style start `plane_b = C_b * y / max(r, eps)` in the mosaic domain.
pub fn init_estimate<T: Real>(y: &Plane<T>, masks: &MaskStack<T>) -> Result<VideoCube<T>> {
    let eps = T::of(GRAM_EPS);
    masks.adjoint_weighted(y, |r| r.max(eps))
}
