//! Residual CNN denoiser with a noise-level input map.
//!
//! Each plane of the input cube is denoised independently: the network sees
//! the plane and a constant `sigma / 255` channel and predicts the noise,
//! which is subtracted from the input.

use super::nn::{FeatureMap, PriorParams};
use super::{Denoiser, PriorGradient, TrainableDenoiser, SIGMA_SCALE};
use crate::error::{Result, SciError};
use crate::model::VideoCube;
use crate::scalar::Real;

pub const CNN_DEPTH: usize = 5;
pub const CNN_WIDTH: usize = 32;
/// Plane plus noise-level map.
pub const CNN_IN_CHANNELS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct CnnDenoiser<T> {
    pub params: PriorParams<T>,
}

impl<T: Real> CnnDenoiser<T> {
    /// Default architecture with Kaiming initialization.
    pub fn new(seed: u64) -> Self {
        CnnDenoiser {
            params: PriorParams::kaiming(CNN_IN_CHANNELS, CNN_WIDTH, 1, CNN_DEPTH, 0.1, seed),
        }
    }

    /// Custom width and depth, same input and output contract.
    pub fn with_shape(width: usize, depth: usize, seed: u64) -> Self {
        CnnDenoiser {
            params: PriorParams::kaiming(CNN_IN_CHANNELS, width, 1, depth, 0.1, seed),
        }
    }

    pub fn from_params(params: PriorParams<T>) -> Result<Self> {
        params.validate()?;
        if params.in_channels() != CNN_IN_CHANNELS || params.out_channels() != 1 {
            return Err(SciError::DimensionMismatch(format!(
                "denoiser network must map {CNN_IN_CHANNELS} -> 1 channels, got {} -> {}",
                params.in_channels(),
                params.out_channels()
            )));
        }
        Ok(CnnDenoiser { params })
    }

    fn network_input(plane: &[T], h: usize, w: usize, sigma: T) -> FeatureMap<T> {
        let level = sigma / T::of(SIGMA_SCALE);
        let mut data = Vec::with_capacity(2 * h * w);
        data.extend_from_slice(plane);
        data.extend(std::iter::repeat_n(level, h * w));
        FeatureMap {
            channels: 2,
            height: h,
            width: w,
            data,
        }
    }
}

/// `out = noisy - N(noisy, sigma)`, plane by plane.
pub fn cnn_forward<T: Real>(params: &PriorParams<T>, noisy: &VideoCube<T>, sigma: T) -> Result<VideoCube<T>> {
    if params.in_channels() != CNN_IN_CHANNELS || params.out_channels() != 1 {
        return Err(SciError::DimensionMismatch("denoiser network channel contract".into()));
    }
    let (h, w) = (noisy.height(), noisy.width());
    let mut out = noisy.clone();
    for b in 0..noisy.frames() {
        for c in 0..noisy.channels() {
            let input = CnnDenoiser::network_input(noisy.plane(b, c), h, w, sigma);
            let noise = params.forward(&input)?;
            for (o, &n) in out.plane_mut(b, c).iter_mut().zip(&noise.data) {
                *o -= n;
            }
        }
    }
    Ok(out)
}

/// Reverse pass of [`cnn_forward`] for the upstream gradient `out_grad`.
/// Returns parameter gradients (same shape as `params`) and the input gradient.
pub fn cnn_backward<T: Real>(
    params: &PriorParams<T>,
    noisy: &VideoCube<T>,
    sigma: T,
    out_grad: &VideoCube<T>,
) -> Result<(PriorParams<T>, VideoCube<T>)> {
    noisy.ensure_same_shape(out_grad, "cnn_backward out_grad")?;
    let (h, w) = (noisy.height(), noisy.width());
    let mut grads = params.zeros_like();
    let mut input_grad = out_grad.clone();
    for b in 0..noisy.frames() {
        for c in 0..noisy.channels() {
            let g = out_grad.plane(b, c);
            if g.iter().all(|&v| v == T::zero()) {
                continue;
            }
            let input = CnnDenoiser::network_input(noisy.plane(b, c), h, w, sigma);
            let (_, cache) = params.forward_cached(&input)?;
            // d(out)/d(noise) = -1
            let neg = FeatureMap {
                channels: 1,
                height: h,
                width: w,
                data: g.iter().map(|&v| -v).collect(),
            };
            let gin = params
                .backward(&cache, &neg, &mut grads, true)?
                .expect("input gradient requested");
            for (o, &gi) in input_grad.plane_mut(b, c).iter_mut().zip(gin.channel(0)) {
                *o += gi;
            }
        }
    }
    Ok((grads, input_grad))
}

impl<T: Real> Denoiser<T> for CnnDenoiser<T> {
    fn denoise(&self, input: &VideoCube<T>, sigma: T) -> Result<VideoCube<T>> {
        cnn_forward(&self.params, input, sigma)
    }

    fn name(&self) -> String {
        format!("cnn({} params)", self.params.parameter_count())
    }
}

impl<T: Real> TrainableDenoiser<T> for CnnDenoiser<T> {
    fn parameters(&self) -> Vec<T> {
        self.params.to_flat()
    }

    fn set_parameters(&mut self, flat: &[T]) -> Result<()> {
        self.params.set_flat(flat)
    }

    fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    fn backward(&self, input: &VideoCube<T>, sigma: T, out_grad: &VideoCube<T>) -> Result<PriorGradient<T>> {
        let (g, gin) = cnn_backward(&self.params, input, sigma, out_grad)?;
        Ok(PriorGradient {
            params: g.to_flat(),
            input: gin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::nn::{Activation, ConvLayer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(h: usize, w: usize, c: usize, b: usize, seed: u64) -> VideoCube<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * c * b).map(|_| rng.random::<f64>()).collect();
        VideoCube::from_vec(h, w, c, b, data).unwrap()
    }

    #[test]
    fn zero_weights_are_identity() {
        let d = CnnDenoiser::<f64> {
            params: PriorParams::zeros(2, 32, 1, 5),
        };
        let x = random_cube(6, 7, 1, 2, 1);
        assert_eq!(d.denoise(&x, 25.0).unwrap(), x);
    }

    #[test]
    fn identity_kernel_predicts_the_input() {
        let mut layer = ConvLayer::zeros(2, 1, Activation::Linear);
        let idx = layer.weight_index(0, 0, 1, 1);
        layer.weight[idx] = 1.0;
        let d = CnnDenoiser::from_params(PriorParams { layers: vec![layer] }).unwrap();
        let x = random_cube(5, 5, 1, 1, 2);
        let out = d.denoise(&x, 12.0).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frames_are_processed_independently() {
        let d = CnnDenoiser::<f64>::with_shape(8, 3, 5);
        let x = random_cube(6, 6, 1, 2, 3);
        let joint = d.denoise(&x, 25.0).unwrap();
        for b in 0..2 {
            let single = d.denoise(&x.frame_range(b, 1).unwrap(), 25.0).unwrap();
            assert_eq!(single.as_slice(), joint.frame(b));
        }
    }

    #[test]
    fn zero_out_grad_gives_zero_gradients() {
        let d = CnnDenoiser::<f64>::with_shape(8, 3, 5);
        let x = random_cube(6, 6, 1, 1, 4);
        let (g, gin) = cnn_backward(&d.params, &x, 25.0, &x.zeros_like()).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(gin.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_are_linear_in_out_grad() {
        let d = CnnDenoiser::<f64>::with_shape(8, 3, 6);
        let x = random_cube(6, 6, 1, 1, 5);
        let g1 = random_cube(6, 6, 1, 1, 6);
        let g2 = random_cube(6, 6, 1, 1, 7);
        let (a, ai) = cnn_backward(&d.params, &x, 12.0, &g1).unwrap();
        let (b, bi) = cnn_backward(&d.params, &x, 12.0, &g2).unwrap();
        let (c, ci) = cnn_backward(&d.params, &x, 12.0, &g1.add(&g2)).unwrap();
        for ((p, q), r) in a.to_flat().iter().zip(b.to_flat()).zip(c.to_flat()) {
            assert!((p + q - r).abs() <= 1e-12 * r.abs().max(1.0));
        }
        assert!(ai.add(&bi).max_abs_diff(&ci) <= 1e-12);
    }

    #[test]
    fn mismatched_params_rejected() {
        assert!(CnnDenoiser::from_params(PriorParams::<f64>::zeros(3, 4, 1, 2)).is_err());
        let d = CnnDenoiser::<f64>::with_shape(4, 2, 0);
        let x = random_cube(4, 4, 1, 1, 0);
        assert!(cnn_backward(&d.params, &x, 1.0, &random_cube(4, 4, 1, 2, 0)).is_err());
    }
}
