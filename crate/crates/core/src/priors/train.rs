//! Offline SGD training of the demosaicing network and the CNN denoiser on
//! random patches of synthetic cubes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cnn::{cnn_backward, cnn_forward};
use super::ddnet::{DdnetParams, DdnetSpec};
use super::nn::{FeatureMap, PriorParams};
use super::SIGMA_SCALE;
use crate::error::{Result, SciError};
use crate::model::{CfaOperator, VideoCube};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub patch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            lr: 0.05,
            batch: 64,
            patch: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.patch < 2 || self.patch % 2 != 0 {
            return Err(SciError::InvalidParameter(format!(
                "batch must be >= 1 and patch even and >= 2 (got {}, {})",
                self.batch, self.patch
            )));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(SciError::InvalidParameter(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

/// Mean batch loss per step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn initial(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// A `patch x patch` crop of frames `t-1, t, t+1` (clamped) of one cube.
fn sample_window<T: Real>(
    data: &[VideoCube<T>],
    patch: usize,
    rng: &mut ChaCha8Rng,
) -> VideoCube<T> {
    let cube = &data[rng.random_range(0..data.len())];
    let (h, w, c, b) = cube.shape();
    let i0 = 2 * rng.random_range(0..=(h - patch) / 2);
    let j0 = 2 * rng.random_range(0..=(w - patch) / 2);
    let t = rng.random_range(0..b) as isize;
    let mut out = VideoCube::zeros(patch, patch, c, 3);
    for (k, d) in (-1..=1).enumerate() {
        let s = (t + d).clamp(0, b as isize - 1) as usize;
        for ch in 0..c {
            let src = cube.plane(s, ch);
            let dst = out.plane_mut(k, ch);
            for i in 0..patch {
                dst[i * patch..(i + 1) * patch].copy_from_slice(&src[(i0 + i) * w + j0..(i0 + i) * w + j0 + patch]);
            }
        }
    }
    out
}

fn check_dataset<T: Real>(data: &[VideoCube<T>], channels: usize, patch: usize) -> Result<()> {
    if data.is_empty() {
        return Err(SciError::EmptyDataset);
    }
    for cube in data {
        if cube.channels() != channels {
            return Err(SciError::DimensionMismatch(format!(
                "training cubes must have {channels} channels, got {}",
                cube.channels()
            )));
        }
        if cube.height() < patch || cube.width() < patch {
            return Err(SciError::TooSmall {
                height: cube.height(),
                width: cube.width(),
                min: patch,
            });
        }
    }
    Ok(())
}

/// Trains a freshly initialized network (seeded by `cfg.seed`).
pub fn train_demosaic<T: Real>(
    spec: DdnetSpec,
    dataset: &[VideoCube<T>],
    cfg: &TrainConfig,
) -> Result<(DdnetParams<T>, TrainReport)> {
    let init = DdnetParams::new(spec, cfg.seed);
    train_demosaic_from(init, dataset, cfg)
}

/// Continues training from `params`, minimizing the mean squared error of
/// the center frame of each sampled window.
pub fn train_demosaic_from<T: Real>(
    mut params: DdnetParams<T>,
    dataset: &[VideoCube<T>],
    cfg: &TrainConfig,
) -> Result<(DdnetParams<T>, TrainReport)> {
    cfg.validate()?;
    check_dataset(dataset, 3, cfg.patch)?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d05a);
    let cfa = CfaOperator::new(cfg.patch, cfg.patch)?;
    let n = (3 * cfg.patch * cfg.patch * cfg.batch) as f64;
    let lr = T::of(cfg.lr);
    let mut report = TrainReport::default();
    for _ in 0..cfg.steps {
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for _ in 0..cfg.batch {
            let window = sample_window(dataset, cfg.patch, &mut rng);
            let mosaic = cfa.mosaic(&window)?;
            let (sparse, bilinear) = params.prepare(&mosaic)?;
            let (out, cache) = params.forward_frame(&sparse, &bilinear, 1)?;
            let truth = window.frame(1);
            let mut g = FeatureMap::zeros(3, cfg.patch, cfg.patch);
            for ((gv, &o), &t) in g.data.iter_mut().zip(&out.data).zip(truth) {
                let d = o - t;
                loss += d.to_f64_lossy() * d.to_f64_lossy();
                *gv = T::of(2.0 / n) * d;
            }
            params.backward_frame(&cache, &g, &mut grads)?;
        }
        report.losses.push(loss / n);
        if !grads.fusion.is_finite() || !grads.refine.is_finite() {
            return Err(SciError::NonFinite("training gradient".into()));
        }
        params.sgd_step(&grads, lr);
    }
    Ok((params, report))
}

/// Trains a residual CNN denoiser on single-channel patches with additive
/// Gaussian noise, drawing `sigma` (0-255 scale) uniformly from `sigmas`.
pub fn train_denoiser<T: Real>(
    mut params: PriorParams<T>,
    dataset: &[VideoCube<T>],
    sigmas: &[f64],
    cfg: &TrainConfig,
) -> Result<(PriorParams<T>, TrainReport)> {
    cfg.validate()?;
    if sigmas.is_empty() || sigmas.iter().any(|&s| !(s > 0.0)) {
        return Err(SciError::InvalidParameter("noise levels must be positive".into()));
    }
    if dataset.is_empty() {
        return Err(SciError::EmptyDataset);
    }
    let channels = dataset[0].channels();
    check_dataset(dataset, channels, cfg.patch)?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd0_15e);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let n = (cfg.patch * cfg.patch * cfg.batch) as f64;
    let lr = T::of(cfg.lr);
    let mut report = TrainReport::default();
    for _ in 0..cfg.steps {
        let mut grads = params.zeros_like();
        let mut loss = 0.0;
        for _ in 0..cfg.batch {
            let window = sample_window(dataset, cfg.patch, &mut rng);
            let ch = rng.random_range(0..channels);
            let clean = VideoCube::from_vec(cfg.patch, cfg.patch, 1, 1, window.plane(1, ch).to_vec())?;
            let sigma = sigmas[rng.random_range(0..sigmas.len())];
            let std = sigma / SIGMA_SCALE;
            let mut noisy = clean.clone();
            for v in noisy.as_mut_slice() {
                *v += T::of(std * unit.sample(&mut rng));
            }
            let out = cnn_forward(&params, &noisy, T::of(sigma))?;
            let diff = out.sub(&clean);
            loss += diff.dot(&diff).to_f64_lossy();
            let g = diff.scale(T::of(2.0 / n));
            let (pg, _) = cnn_backward(&params, &noisy, T::of(sigma), &g)?;
            grads.add_assign(&pg);
        }
        report.losses.push(loss / n);
        if !grads.is_finite() {
            return Err(SciError::NonFinite("training gradient".into()));
        }
        params.sgd_step(&grads, lr);
    }
    Ok((params, report))
}
