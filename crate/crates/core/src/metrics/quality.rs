//! PSNR and SSIM on `[0, 1]` data.

use crate::error::{Result, SciError};
use crate::model::VideoCube;
use crate::scalar::Real;

/// Reported for identical inputs instead of `+inf`.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// PSNR of every frame (all channels pooled within a frame).
pub fn psnr_per_frame<T: Real>(a: &VideoCube<T>, b: &VideoCube<T>) -> Result<Vec<f64>> {
    a.ensure_same_shape(b, "psnr")?;
    Ok((0..a.frames())
        .map(|f| {
            let fa = a.frame(f);
            let fb = b.frame(f);
            let se: f64 = fa
                .iter()
                .zip(fb)
                .map(|(&x, &y)| {
                    let d = (x - y).to_f64_lossy();
                    d * d
                })
                .sum();
            psnr_from_mse(se / fa.len() as f64)
        })
        .collect())
}

/// Mean of per-frame PSNR values, in dB.
pub fn psnr<T: Real>(a: &VideoCube<T>, b: &VideoCube<T>) -> Result<f64> {
    let frames = psnr_per_frame(a, b)?;
    Ok(frames.iter().sum::<f64>() / frames.len() as f64)
}

fn gaussian_window(size: usize) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut g: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Window side actually used for an `h x w` frame: 11, or the largest odd
/// size that fits.
pub fn ssim_window_size(h: usize, w: usize) -> usize {
    let m = h.min(w).min(SSIM_WINDOW);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Separable 'valid' filtering.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            let mut acc = 0.0;
            for (t, &gt) in g.iter().enumerate() {
                acc += gt * x[i * w + j + t];
            }
            rows[i * ow + j] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for (t, &gt) in g.iter().enumerate() {
            let src = &rows[(i + t) * ow..(i + t + 1) * ow];
            for (o, &s) in out[i * ow..(i + 1) * ow].iter_mut().zip(src) {
                *o += gt * s;
            }
        }
    }
    out
}

/// Mean SSIM of two single-channel frames given as row-major slices.
pub fn ssim_plane<T: Real>(a: &[T], b: &[T], h: usize, w: usize) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(SciError::DimensionMismatch(format!(
            "ssim inputs of length {} and {} for a {h}x{w} frame",
            a.len(),
            b.len()
        )));
    }
    if h == 0 || w == 0 {
        return Err(SciError::TooSmall { height: h, width: w, min: 1 });
    }
    let g = gaussian_window(ssim_window_size(h, w));
    let a: Vec<f64> = a.iter().map(|v| v.to_f64_lossy()).collect();
    let b: Vec<f64> = b.iter().map(|v| v.to_f64_lossy()).collect();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(&a, h, w, &g);
    let mu_b = filter_valid(&b, h, w, &g);
    let e_aa = filter_valid(&aa, h, w, &g);
    let e_bb = filter_valid(&bb, h, w, &g);
    let e_ab = filter_valid(&ab, h, w, &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for k in 0..mu_a.len() {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let va = e_aa[k] - ma * ma;
        let vb = e_bb[k] - mb * mb;
        let cov = e_ab[k] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// SSIM averaged over all frames and channels.
pub fn ssim<T: Real>(a: &VideoCube<T>, b: &VideoCube<T>) -> Result<f64> {
    a.ensure_same_shape(b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    let mut total = 0.0;
    for f in 0..a.frames() {
        for c in 0..a.channels() {
            total += ssim_plane(a.plane(f, c), b.plane(f, c), h, w)?;
        }
    }
    Ok(total / (a.frames() * a.channels()) as f64)
}
