//! Anisotropic total-variation denoising by iterative clipping.
//!
//! Solves `min_x 1/2 ||x - y||^2 + weight * TV(x)` plane by plane, where
//! `TV` sums absolute horizontal and vertical forward differences. The dual
//! variable lives on the edges and is updated by a projected gradient step
//! `z <- clip(z + D x / alpha, weight)` with `x = y - D^T z`, `alpha = 8`
//! bounding the largest eigenvalue of `D D^T` in 2-D.

use super::Denoiser;
use crate::error::Result;
use crate::model::VideoCube;
use crate::scalar::Real;

pub const DEFAULT_TV_WEIGHT: f64 = 0.05;
pub const DEFAULT_TV_ITERS: usize = 20;

const ALPHA: f64 = 8.0;

#[inline]
fn clip<T: Real>(v: T, bound: T) -> T {
    v.max(-bound).min(bound)
}

/// `y - D^T z` for one plane.
fn primal<T: Real>(y: &[T], zh: &[T], zv: &[T], h: usize, w: usize, out: &mut [T]) {
    out.copy_from_slice(y);
    if w > 1 {
        for i in 0..h {
            for j in 0..w - 1 {
                let z = zh[i * (w - 1) + j];
                // D^T on edge (j, j+1): -z at j, +z at j+1; x = y - D^T z.
                out[i * w + j] += z;
                out[i * w + j + 1] -= z;
            }
        }
    }
    for i in 0..h.saturating_sub(1) {
        for j in 0..w {
            let z = zv[i * w + j];
            out[i * w + j] += z;
            out[(i + 1) * w + j] -= z;
        }
    }
}

pub(crate) fn tv_plane<T: Real>(y: &[T], h: usize, w: usize, weight: T, iters: usize) -> Vec<T> {
    let mut zh = vec![T::zero(); h * w.saturating_sub(1)];
    let mut zv = vec![T::zero(); h.saturating_sub(1) * w];
    let mut x = y.to_vec();
    let step = T::one() / T::of(ALPHA);
    for _ in 0..iters {
        primal(y, &zh, &zv, h, w, &mut x);
        if w > 1 {
            for i in 0..h {
                for j in 0..w - 1 {
                    let k = i * (w - 1) + j;
                    let d = x[i * w + j + 1] - x[i * w + j];
                    zh[k] = clip(zh[k] + step * d, weight);
                }
            }
        }
        for i in 0..h.saturating_sub(1) {
            for j in 0..w {
                let k = i * w + j;
                let d = x[(i + 1) * w + j] - x[k];
                zv[k] = clip(zv[k] + step * d, weight);
            }
        }
    }
    primal(y, &zh, &zv, h, w, &mut x);
    x
}

/// Anisotropic TV of one plane.
pub fn total_variation<T: Real>(x: &[T], h: usize, w: usize) -> T {
    let mut tv = T::zero();
    for i in 0..h {
        for j in 0..w {
            if j + 1 < w {
                tv += (x[i * w + j + 1] - x[i * w + j]).abs();
            }
            if i + 1 < h {
                tv += (x[(i + 1) * w + j] - x[i * w + j]).abs();
            }
        }
    }
    tv
}

/// TV-denoises every plane of `stack` independently.
pub fn tv_denoise<T: Real>(stack: &VideoCube<T>, weight: T, iters: usize) -> VideoCube<T> {
    let (h, w) = (stack.height(), stack.width());
    let mut out = stack.clone();
    let iters = iters.max(1);
    for b in 0..stack.frames() {
        for c in 0..stack.channels() {
            let d = tv_plane(stack.plane(b, c), h, w, weight, iters);
            out.plane_mut(b, c).copy_from_slice(&d);
        }
    }
    out
}

/// TV prior with a fixed regularization weight; the schedule's `sigma` is
/// ignored unless `sigma_reference` is set, in which case the weight is
/// scaled by `sigma / sigma_reference`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvDenoiser {
    pub weight: f64,
    pub iters: usize,
    pub sigma_reference: Option<f64>,
}

impl TvDenoiser {
    pub fn new(weight: f64, iters: usize) -> Self {
        TvDenoiser {
            weight,
            iters,
            sigma_reference: None,
        }
    }
}

impl Default for TvDenoiser {
    fn default() -> Self {
        Self::new(DEFAULT_TV_WEIGHT, DEFAULT_TV_ITERS)
    }
}

impl<T: Real> Denoiser<T> for TvDenoiser {
    fn denoise(&self, input: &VideoCube<T>, sigma: T) -> Result<VideoCube<T>> {
        let mut weight = self.weight;
        if let Some(r) = self.sigma_reference {
            weight *= sigma.to_f64_lossy() / r;
        }
        Ok(tv_denoise(input, T::of(weight), self.iters))
    }

    fn name(&self) -> String {
        format!("tv(w={},it={})", self.weight, self.iters)
    }
}
