//! Generalized alternating projection with a plugged denoiser.

use super::schedule::Schedule;
use super::trace::{Trace, TraceRow};
use crate::error::{Result, SciError};
use crate::metrics::psnr;
use crate::model::{init_estimate, CfaOperator, MaskStack, Plane, VideoCube, GRAM_EPS};
use crate::priors::{BayerComponentDenoiser, BilinearDemosaicer, Demosaicer, Denoiser};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct GapOptions<'a, T> {
    pub schedule: Schedule,
    /// Starting point; defaults to `H^T (y ./ max(r, eps))`.
    pub init: Option<VideoCube<T>>,
    /// Same domain as the iterate (grayscale or mosaic).
    pub truth: Option<&'a VideoCube<T>>,
    /// After each denoising step add the residual back into the target,
    /// `y_{k+1} = y_k + (y - H x_k)`. Off gives the plain projection.
    pub accelerate: bool,
}

impl<T> Default for GapOptions<'_, T> {
    fn default() -> Self {
        GapOptions {
            schedule: Schedule::default(),
            init: None,
            truth: None,
            accelerate: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GapResult<T> {
    /// Clipped final iterate.
    pub cube: VideoCube<T>,
    /// Unclipped final iterate.
    pub raw: VideoCube<T>,
    pub trace: Trace,
}

fn fidelity<T: Real>(y: &Plane<T>, masks: &MaskStack<T>, x: &VideoCube<T>) -> Result<f64> {
    let hx = masks.apply_h(x)?;
    Ok(y
        .as_slice()
        .iter()
        .zip(hx.as_slice())
        .map(|(&a, &b)| (a - b).to_f64_lossy().powi(2))
        .sum::<f64>()
        .sqrt())
}

/// `x <- D_sigma(x + H^T[(y_k - H x) / max(r, eps)])` over the schedule,
/// with `y_k = y` unless `accelerate` is set.
pub fn gap_solve<T: Real>(
    y: &Plane<T>,
    masks: &MaskStack<T>,
    denoiser: &dyn Denoiser<T>,
    opts: &GapOptions<'_, T>,
) -> Result<GapResult<T>> {
    opts.schedule.validate()?;
    if y.height() != masks.height() || y.width() != masks.width() {
        return Err(SciError::DimensionMismatch("measurement vs masks".into()));
    }
    let mut x = match &opts.init {
        Some(x0) => x0.clone(),
        None => init_estimate(y, masks)?,
    };
    if x.channels() != 1 || x.frames() != masks.frames() {
        return Err(SciError::DimensionMismatch(format!("GAP iterate {:?}", x.shape())));
    }
    if let Some(t) = opts.truth {
        x.ensure_same_shape(t, "ground truth")?;
    }
    let eps = T::of(GRAM_EPS);
    let mut trace = Trace {
        initial_fidelity: fidelity(y, masks, &x)?,
        ..Trace::default()
    };
    let mut target = y.clone();
    for (k, sigma) in opts.schedule.sigmas().into_iter().enumerate() {
        let hx = masks.apply_h(&x)?;
        let e: Vec<T> = target.as_slice().iter().zip(hx.as_slice()).map(|(&a, &b)| a - b).collect();
        let e = Plane::from_vec(y.height(), y.width(), e)?;
        let step = masks.adjoint_weighted(&e, |r| r.max(eps))?;
        x.axpy(T::one(), &step);
        x = denoiser.denoise(&x, T::of(sigma))?;
        if opts.accelerate {
            let hx = masks.apply_h(&x)?;
            for ((t, &a), &b) in target.as_mut_slice().iter_mut().zip(y.as_slice()).zip(hx.as_slice()) {
                *t += a - b;
            }
        }
        if !x.is_finite() {
            return Err(SciError::NonFinite(format!("GAP iterate at iteration {}", k + 1)));
        }
        let psnr = match opts.truth {
            Some(t) => Some(psnr(&x.clip(T::zero(), T::one()), t)?),
            None => None,
        };
        trace.rows.push(TraceRow {
            iter: k + 1,
            sigma,
            fidelity: fidelity(y, masks, &x)?,
            primal_q: None,
            primal_x: None,
            psnr,
            online_loss: None,
            update: None,
        });
    }
    Ok(GapResult {
        cube: x.clip(T::zero(), T::one()),
        raw: x,
        trace,
    })
}

/// Colour baseline: GAP on the mosaic domain with the denoiser applied per
/// Bayer component, then per-frame bilinear demosaicing.
pub fn gap_color_baseline<T: Real>(
    y: &Plane<T>,
    masks: &MaskStack<T>,
    cfa: &CfaOperator,
    denoiser: &dyn Denoiser<T>,
    schedule: &Schedule,
) -> Result<GapResult<T>> {
    if cfa.height() != masks.height() || cfa.width() != masks.width() {
        return Err(SciError::DimensionMismatch("CFA vs masks".into()));
    }
    let bayer = BayerComponentDenoiser { inner: denoiser };
    let opts = GapOptions {
        schedule: schedule.clone(),
        init: None,
        truth: None,
        accelerate: true,
    };
    let mosaic = gap_solve(y, masks, &bayer, &opts)?;
    let rgb = BilinearDemosaicer.demosaic(&mosaic.raw)?;
    Ok(GapResult {
        cube: rgb.clip(T::zero(), T::one()),
        raw: rgb,
        trace: mosaic.trace,
    })
}
