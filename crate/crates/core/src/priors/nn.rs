//! Minimal 3x3 convolutional networks with hand-written reverse mode.
//!
//! Every convolution uses stride 1 and reflect padding of one pixel, so the
//! spatial size is preserved. A network is a plain list of layers; hidden
//! layers apply ReLU, the last one is linear.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SciError};
use crate::scalar::Real;

/// `channels x height x width` activations, row-major per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(SciError::DimensionMismatch(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

/// One 3x3 convolution: kernel `out x in x 3 x 3`, bias `out`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, activation: Activation) -> Self {
        ConvLayer {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * 9],
            bias: vec![T::zero(); out_channels],
            activation,
        }
    }

    #[inline]
    pub fn weight_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * 3 + ky) * 3 + kx
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Pre-activation output for an already padded input.
    fn forward_padded(&self, padded: &FeatureMap<T>, height: usize, width: usize) -> FeatureMap<T> {
        let pw = width + 2;
        let mut out = FeatureMap::zeros(self.out_channels, height, width);
        for o in 0..self.out_channels {
            let dst = out.channel_mut(o);
            dst.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_channels {
                let src = padded.channel(i);
                for ky in 0..3 {
                    for kx in 0..3 {
                        let w = self.weight[self.weight_index(o, i, ky, kx)];
                        if w == T::zero() {
                            continue;
                        }
                        for y in 0..height {
                            let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + width];
                            let d = &mut dst[y * width..(y + 1) * width];
                            for (dv, &sv) in d.iter_mut().zip(s) {
                                *dv += w * sv;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// returns the gradient with respect to the (unpadded) input.
    fn backward_padded(
        &self,
        padded: &FeatureMap<T>,
        out_grad: &FeatureMap<T>,
        grad: &mut ConvLayer<T>,
        need_input: bool,
    ) -> Option<FeatureMap<T>> {
        let (height, width) = (out_grad.height, out_grad.width);
        let pw = width + 2;
        let mut gpad = if need_input {
            Some(FeatureMap::zeros(self.in_channels, height + 2, width + 2))
        } else {
            None
        };
        for o in 0..self.out_channels {
            let g = out_grad.channel(o);
            grad.bias[o] += g.iter().copied().sum::<T>();
            for i in 0..self.in_channels {
                let src = padded.channel(i);
                for ky in 0..3 {
                    for kx in 0..3 {
                        let widx = self.weight_index(o, i, ky, kx);
                        let mut acc = T::zero();
                        for y in 0..height {
                            let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + width];
                            let gr = &g[y * width..(y + 1) * width];
                            acc += s.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                        }
                        grad.weight[widx] += acc;
                        if let Some(gp) = gpad.as_mut() {
                            let w = self.weight[widx];
                            if w == T::zero() {
                                continue;
                            }
                            let dst = gp.channel_mut(i);
                            for y in 0..height {
                                let d = &mut dst[(y + ky) * pw + kx..(y + ky) * pw + kx + width];
                                let gr = &g[y * width..(y + 1) * width];
                                for (dv, &gv) in d.iter_mut().zip(gr) {
                                    *dv += w * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
        gpad.map(|gp| fold_reflect_pad(&gp, height, width))
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r as usize
}

/// Reflect-pads every channel by one pixel.
pub fn reflect_pad<T: Real>(input: &FeatureMap<T>) -> FeatureMap<T> {
    let (h, w) = (input.height, input.width);
    let (ph, pw) = (h + 2, w + 2);
    let mut out = FeatureMap::zeros(input.channels, ph, pw);
    for c in 0..input.channels {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for py in 0..ph {
            let sy = reflect(py as isize - 1, h);
            for px in 0..pw {
                let sx = reflect(px as isize - 1, w);
                dst[py * pw + px] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Adjoint of [`reflect_pad`].
fn fold_reflect_pad<T: Real>(padded: &FeatureMap<T>, height: usize, width: usize) -> FeatureMap<T> {
    let pw = width + 2;
    let mut out = FeatureMap::zeros(padded.channels, height, width);
    for c in 0..padded.channels {
        let src = padded.channel(c);
        let dst = out.channel_mut(c);
        for py in 0..height + 2 {
            let sy = reflect(py as isize - 1, height);
            for px in 0..pw {
                let sx = reflect(px as isize - 1, width);
                dst[sy * width + sx] += src[py * pw + px];
            }
        }
    }
    out
}

/// Weights of a feed-forward stack of [`ConvLayer`]s. The same type serves
/// as the gradient buffer, which therefore always mirrors the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorParams<T> {
    pub layers: Vec<ConvLayer<T>>,
}

/// Per-layer values kept from a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    padded_inputs: Vec<FeatureMap<T>>,
    pre_activations: Vec<FeatureMap<T>>,
}

impl<T: Real> PriorParams<T> {
    /// `in -> width -> ... -> width -> out` with `depth` layers in total.
    pub fn zeros(in_channels: usize, width: usize, out_channels: usize, depth: usize) -> Self {
        assert!(depth >= 1, "network needs at least one layer");
        let layers = (0..depth)
            .map(|l| {
                let cin = if l == 0 { in_channels } else { width };
                let cout = if l + 1 == depth { out_channels } else { width };
                let act = if l + 1 == depth {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                ConvLayer::zeros(cin, cout, act)
            })
            .collect();
        PriorParams { layers }
    }

    /// Kaiming fan-in initialization (`std = sqrt(2 / (9 * in))`), zero
    /// biases. The final layer is scaled by `last_scale`.
    pub fn kaiming(
        in_channels: usize,
        width: usize,
        out_channels: usize,
        depth: usize,
        last_scale: f64,
        seed: u64,
    ) -> Self {
        let mut params = Self::zeros(in_channels, width, out_channels, depth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = params.layers.len();
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let fan_in = (layer.in_channels * 9) as f64;
            let mut std = (2.0 / fan_in).sqrt();
            if l + 1 == n_layers {
                std *= last_scale;
            }
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in layer.weight.iter_mut() {
                *w = T::of(normal.sample(&mut rng));
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        PriorParams {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.in_channels, l.out_channels, l.activation))
                .collect(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].out_channels
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::parameter_count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(SciError::InvalidParameter("network has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(SciError::DimensionMismatch(format!(
                    "layer chain {} -> {}",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        for l in &self.layers {
            if l.weight.len() != l.out_channels * l.in_channels * 9 || l.bias.len() != l.out_channels {
                return Err(SciError::DimensionMismatch("layer buffer sizes".into()));
            }
        }
        if !self.is_finite() {
            return Err(SciError::NonFinite("network weights".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Weights then bias, layer by layer.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(SciError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weight.len();
            l.weight.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// `self -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &PriorParams<T>, lr: T) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, &gw) in l.weight.iter_mut().zip(&g.weight) {
                *w -= lr * gw;
            }
            for (b, &gb) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &PriorParams<T>) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            for (a, &b) in l.weight.iter_mut().zip(&o.weight) {
                *a += b;
            }
            for (a, &b) in l.bias.iter_mut().zip(&o.bias) {
                *a += b;
            }
        }
    }

    fn check_input(&self, input: &FeatureMap<T>) -> Result<()> {
        if input.channels != self.in_channels() {
            return Err(SciError::DimensionMismatch(format!(
                "network expects {} input channels, got {}",
                self.in_channels(),
                input.channels
            )));
        }
        if input.height < 2 || input.width < 2 {
            return Err(SciError::TooSmall {
                height: input.height,
                width: input.width,
                min: 2,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.check_input(input)?;
        let (h, w) = (input.height, input.width);
        let mut act = input.clone();
        for layer in &self.layers {
            let padded = reflect_pad(&act);
            act = layer.forward_padded(&padded, h, w);
            if layer.activation == Activation::Relu {
                act.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
        }
        Ok(act)
    }

    pub fn forward_cached(&self, input: &FeatureMap<T>) -> Result<(FeatureMap<T>, ForwardCache<T>)> {
        self.check_input(input)?;
        let (h, w) = (input.height, input.width);
        let mut cache = ForwardCache {
            padded_inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut act = input.clone();
        for layer in &self.layers {
            let padded = reflect_pad(&act);
            let pre = layer.forward_padded(&padded, h, w);
            act = pre.clone();
            if layer.activation == Activation::Relu {
                act.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            cache.padded_inputs.push(padded);
            cache.pre_activations.push(pre);
        }
        Ok((act, cache))
    }

    /// Reverse pass: accumulates `d<out_grad, f(input)>/dθ` into `grads`
    /// and returns the input gradient when `need_input` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        out_grad: &FeatureMap<T>,
        grads: &mut PriorParams<T>,
        need_input: bool,
    ) -> Result<Option<FeatureMap<T>>> {
        if out_grad.channels != self.out_channels() {
            return Err(SciError::DimensionMismatch(format!(
                "output gradient has {} channels, network outputs {}",
                out_grad.channels,
                self.out_channels()
            )));
        }
        let n = self.layers.len();
        let mut g = out_grad.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                for (gv, &pv) in g.data.iter_mut().zip(&cache.pre_activations[l].data) {
                    if pv <= T::zero() {
                        *gv = T::zero();
                    }
                }
            }
            let want = l > 0 || need_input;
            match layer.backward_padded(&cache.padded_inputs[l], &g, &mut grads.layers[l], want) {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }

    /// ReLU on/off pattern of the last forward pass; used to detect
    /// finite-difference steps that cross a kink.
    pub fn activation_pattern(cache: &ForwardCache<T>) -> Vec<bool> {
        cache
            .pre_activations
            .iter()
            .flat_map(|p| p.data.iter().map(|&v| v > T::zero()))
            .collect()
    }
}
