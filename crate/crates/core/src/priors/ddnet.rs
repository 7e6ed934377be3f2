//! DDNet-lite: a two-stage residual video demosaicing network.
//!
//! For output frame `t` the fusion stage sees the sparse RGB frames
//! `t-1, t, t+1` (mosaic adjoints, 9 channels) together with the bilinear
//! pre-fill of frame `t` (3 channels) and predicts a correction of that
//! pre-fill. The refinement stage then adds a second residual on top.
//! Out-of-range neighbours are replaced by the nearest valid frame.

use super::demosaic::BilinearDemosaicer;
use super::nn::{FeatureMap, ForwardCache, PriorParams};
use super::{Demosaicer, TrainableDemosaicer};
use crate::error::{Result, SciError};
use crate::model::cfa::check_even;
use crate::model::{CfaOperator, VideoCube};
use crate::scalar::Real;

/// Architecture of the two cascaded residual networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DdnetSpec {
    pub window: usize,
    pub width: usize,
    pub depth: usize,
}

impl Default for DdnetSpec {
    fn default() -> Self {
        DdnetSpec {
            window: 3,
            width: 32,
            depth: 4,
        }
    }
}

impl DdnetSpec {
    pub fn fusion_inputs(&self) -> usize {
        3 * self.window + 3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DdnetParams<T> {
    pub spec: DdnetSpec,
    pub fusion: PriorParams<T>,
    pub refine: PriorParams<T>,
}

/// Intermediate values of one frame's forward pass.
pub(crate) struct FrameCache<T> {
    fusion: ForwardCache<T>,
    refine: ForwardCache<T>,
}

impl<T: Real> DdnetParams<T> {
    pub fn new(spec: DdnetSpec, seed: u64) -> Self {
        DdnetParams {
            spec,
            fusion: PriorParams::kaiming(spec.fusion_inputs(), spec.width, 3, spec.depth, 0.1, seed),
            refine: PriorParams::kaiming(3, spec.width, 3, spec.depth, 0.1, seed.wrapping_add(1)),
        }
    }

    pub fn zeros(spec: DdnetSpec) -> Self {
        DdnetParams {
            spec,
            fusion: PriorParams::zeros(spec.fusion_inputs(), spec.width, 3, spec.depth),
            refine: PriorParams::zeros(3, spec.width, 3, spec.depth),
        }
    }

    pub fn zeros_like(&self) -> Self {
        DdnetParams {
            spec: self.spec,
            fusion: self.fusion.zeros_like(),
            refine: self.refine.zeros_like(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.fusion.parameter_count() + self.refine.parameter_count()
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.fusion.to_flat();
        v.extend(self.refine.to_flat());
        v
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        let n = self.fusion.parameter_count();
        if flat.len() != self.parameter_count() {
            return Err(SciError::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        self.fusion.set_flat(&flat[..n])?;
        self.refine.set_flat(&flat[n..])
    }

    pub fn sgd_step(&mut self, grad: &DdnetParams<T>, lr: T) {
        self.fusion.sgd_step(&grad.fusion, lr);
        self.refine.sgd_step(&grad.refine, lr);
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        self.refine.validate()?;
        if self.fusion.in_channels() != self.spec.fusion_inputs()
            || self.fusion.out_channels() != 3
            || self.refine.in_channels() != 3
            || self.refine.out_channels() != 3
        {
            return Err(SciError::DimensionMismatch("DDNet stage channel contract".into()));
        }
        Ok(())
    }

    /// Assembles the fusion input for frame `t` from precomputed sparse and
    /// bilinear frames.
    fn fusion_input(&self, sparse: &VideoCube<T>, bilinear: &VideoCube<T>, t: usize) -> FeatureMap<T> {
        let (h, w) = (sparse.height(), sparse.width());
        let frames = sparse.frames() as isize;
        let half = (self.spec.window / 2) as isize;
        let mut data = Vec::with_capacity(self.spec.fusion_inputs() * h * w);
        for d in -half..=half {
            let s = (t as isize + d).clamp(0, frames - 1) as usize;
            data.extend_from_slice(sparse.frame(s));
        }
        data.extend_from_slice(bilinear.frame(t));
        FeatureMap {
            channels: self.spec.fusion_inputs(),
            height: h,
            width: w,
            data,
        }
    }

    fn check_mosaic(&self, mosaic: &VideoCube<T>) -> Result<CfaOperator> {
        if mosaic.channels() != 1 {
            return Err(SciError::DimensionMismatch("DDNet expects a mosaic stack".into()));
        }
        check_even(mosaic.height(), mosaic.width())?;
        CfaOperator::new(mosaic.height(), mosaic.width())
    }

    /// Output frame `t` plus everything needed to differentiate it.
    pub(crate) fn forward_frame(
        &self,
        sparse: &VideoCube<T>,
        bilinear: &VideoCube<T>,
        t: usize,
    ) -> Result<(FeatureMap<T>, FrameCache<T>)> {
        let input = self.fusion_input(sparse, bilinear, t);
        let (delta1, fusion) = self.fusion.forward_cached(&input)?;
        let mut stage1 = FeatureMap::from_vec(3, sparse.height(), sparse.width(), bilinear.frame(t).to_vec())?;
        for (s, d) in stage1.data.iter_mut().zip(&delta1.data) {
            *s += *d;
        }
        let (delta2, refine) = self.refine.forward_cached(&stage1)?;
        let mut out = stage1;
        for (s, d) in out.data.iter_mut().zip(&delta2.data) {
            *s += *d;
        }
        Ok((out, FrameCache { fusion, refine }))
    }

    /// Accumulates parameter gradients of `<out_grad, frame_t>` into `grads`.
    pub(crate) fn backward_frame(
        &self,
        cache: &FrameCache<T>,
        out_grad: &FeatureMap<T>,
        grads: &mut DdnetParams<T>,
    ) -> Result<()> {
        let through = self
            .refine
            .backward(&cache.refine, out_grad, &mut grads.refine, true)?
            .expect("input gradient requested");
        let mut g1 = out_grad.clone();
        for (a, b) in g1.data.iter_mut().zip(&through.data) {
            *a += *b;
        }
        self.fusion.backward(&cache.fusion, &g1, &mut grads.fusion, false)?;
        Ok(())
    }

    /// Sparse RGB frames and bilinear pre-fills of a mosaic stack.
    pub(crate) fn prepare(&self, mosaic: &VideoCube<T>) -> Result<(VideoCube<T>, VideoCube<T>)> {
        let cfa = self.check_mosaic(mosaic)?;
        let sparse = cfa.mosaic_adjoint(mosaic)?;
        let bilinear = BilinearDemosaicer.demosaic(mosaic)?;
        Ok((sparse, bilinear))
    }

    pub fn forward(&self, mosaic: &VideoCube<T>) -> Result<VideoCube<T>> {
        let (sparse, bilinear) = self.prepare(mosaic)?;
        let mut out = VideoCube::zeros(mosaic.height(), mosaic.width(), 3, mosaic.frames());
        for t in 0..mosaic.frames() {
            let (frame, _) = self.forward_frame(&sparse, &bilinear, t)?;
            out.frame_mut(t).copy_from_slice(&frame.data);
        }
        Ok(out)
    }

    /// Parameter gradient of `<out_grad, forward(mosaic)>`.
    pub fn backward(&self, mosaic: &VideoCube<T>, out_grad: &VideoCube<T>) -> Result<DdnetParams<T>> {
        if out_grad.channels() != 3
            || out_grad.frames() != mosaic.frames()
            || out_grad.height() != mosaic.height()
            || out_grad.width() != mosaic.width()
        {
            return Err(SciError::DimensionMismatch("DDNet output gradient shape".into()));
        }
        let (sparse, bilinear) = self.prepare(mosaic)?;
        let mut grads = self.zeros_like();
        for t in 0..mosaic.frames() {
            let (_, cache) = self.forward_frame(&sparse, &bilinear, t)?;
            let g = FeatureMap::from_vec(3, mosaic.height(), mosaic.width(), out_grad.frame(t).to_vec())?;
            self.backward_frame(&cache, &g, &mut grads)?;
        }
        Ok(grads)
    }
}

/// Dense RGB cube from a mosaic stack.
pub fn ddnet_forward<T: Real>(params: &DdnetParams<T>, mosaic: &VideoCube<T>) -> Result<VideoCube<T>> {
    params.forward(mosaic)
}

impl<T: Real> Demosaicer<T> for DdnetParams<T> {
    fn demosaic(&self, mosaic: &VideoCube<T>) -> Result<VideoCube<T>> {
        self.forward(mosaic)
    }

    fn name(&self) -> String {
        "ddnet".into()
    }
}

impl<T: Real> TrainableDemosaicer<T> for DdnetParams<T> {
    fn parameters(&self) -> Vec<T> {
        self.to_flat()
    }

    fn set_parameters(&mut self, flat: &[T]) -> Result<()> {
        self.set_flat(flat)
    }

    fn backward(&self, mosaic: &VideoCube<T>, out_grad: &VideoCube<T>) -> Result<Vec<T>> {
        Ok(DdnetParams::backward(self, mosaic, out_grad)?.to_flat())
    }
}
