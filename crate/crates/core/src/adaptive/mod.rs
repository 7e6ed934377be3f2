//! Online adaptation of plugged priors during reconstruction.
//!
//! Every `k0` iterations (after a warm-up) the denoiser weights take SGD
//! steps on the measurement-consistency loss `||y - H T_M v||^2`, where `v`
//! is the denoiser output for the input the v-step just consumed. The
//! gradient stops at that input; earlier iterations are constants.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SciError};
use crate::model::{CfaOperator, ForwardModel, MaskStack, Plane, VideoCube};
use crate::priors::{Demosaicer, Denoiser, PriorGradient, TrainableDemosaicer, TrainableDenoiser};
use crate::scalar::Real;
use crate::solvers::{AdmmEngine, AdmmOptions, Priors, Trace, UpdateEvent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    /// Update interval in iterations.
    pub k0: usize,
    /// No updates at or before this iteration.
    pub warmup: usize,
    pub lr: f64,
    pub updates_per_trigger: usize,
    pub backtracking: bool,
    /// Learning-rate halvings tried before an update is skipped.
    pub max_halvings: usize,
    pub adapt_demosaicer: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            k0: 10,
            warmup: 15,
            lr: 1e-6,
            updates_per_trigger: 1,
            backtracking: true,
            max_halvings: 5,
            adapt_demosaicer: false,
        }
    }
}

impl OnlineConfig {
    /// `lr = 0` is accepted and turns every update into a no-op.
    pub fn validate(&self) -> Result<()> {
        if self.k0 == 0 {
            return Err(SciError::InvalidParameter("k0 must be >= 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(SciError::InvalidParameter(format!("online learning rate {}", self.lr)));
        }
        if self.updates_per_trigger == 0 {
            return Err(SciError::InvalidParameter("updates_per_trigger must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether iteration `k` (1-based) triggers an update.
    pub fn triggers(&self, k: usize) -> bool {
        k > self.warmup && k % self.k0 == 0
    }
}

/// `||y - H T_M x||^2`.
pub fn online_loss<T: Real>(
    y: &Plane<T>,
    masks: &MaskStack<T>,
    cfa: Option<&CfaOperator>,
    x: &VideoCube<T>,
) -> Result<f64> {
    loss_with(&ForwardModel::new(masks, cfa)?, y, x)
}

fn loss_with<T: Real>(model: &ForwardModel<'_, T>, y: &Plane<T>, x: &VideoCube<T>) -> Result<f64> {
    let r = model.residual(y, x)?;
    Ok(r.as_slice().iter().map(|v| v.to_f64_lossy().powi(2)).sum())
}

/// `d loss / d x = -2 T_M^T H^T (y - H T_M x)`.
fn loss_gradient<T: Real>(model: &ForwardModel<'_, T>, y: &Plane<T>, x: &VideoCube<T>) -> Result<VideoCube<T>> {
    let r = model.residual(y, x)?;
    Ok(model.adjoint(&r)?.scale(T::of(-2.0)))
}

/// Flattened `d/dθ ||y - H T_M D_θ(input)||^2` at the denoiser's current
/// parameters.
pub fn online_gradient<T: Real>(
    denoiser: &dyn TrainableDenoiser<T>,
    y: &Plane<T>,
    model: &ForwardModel<'_, T>,
    input: &VideoCube<T>,
    sigma: T,
) -> Result<Vec<T>> {
    let v = denoiser.denoise(input, sigma)?;
    let g = loss_gradient(model, y, &v)?;
    Ok(denoiser.backward(input, sigma, &g)?.params)
}

/// Outcome of [`online_step`]: the event plus the denoiser output under the
/// final parameters.
#[derive(Clone, Debug)]
pub struct OnlineStep<T> {
    pub event: UpdateEvent,
    pub output: VideoCube<T>,
}

fn sgd<T: Real>(params: &[T], grad: &[T], lr: T) -> Vec<T> {
    params.iter().zip(grad).map(|(&p, &g)| p - lr * g).collect()
}

/// Shared SGD-with-backtracking loop for any trainable prior.
///
/// `eval` maps parameters to (output, loss) and `grad` gives the flattened
/// parameter gradient at the current parameters.
fn adapt<T: Real>(
    cfg: &OnlineConfig,
    lr: f64,
    mut set: impl FnMut(&[T]) -> Result<()>,
    mut get: impl FnMut() -> Vec<T>,
    mut eval: impl FnMut() -> Result<(VideoCube<T>, f64)>,
    mut grad: impl FnMut(&VideoCube<T>) -> Result<Vec<T>>,
) -> Result<OnlineStep<T>> {
    let original = get();
    let (mut out, loss_before) = eval()?;
    if lr == 0.0 {
        return Ok(OnlineStep {
            event: UpdateEvent::Accepted {
                loss_before,
                loss_after: loss_before,
                lr,
                halvings: 0,
            },
            output: out,
        });
    }
    let mut loss = loss_before;
    let mut used_lr = lr;
    let mut halvings = 0;
    for _ in 0..cfg.updates_per_trigger {
        let g = grad(&out)?;
        if g.iter().any(|v| !v.is_finite()) {
            set(&original)?;
            let (out0, _) = eval()?;
            return Ok(OnlineStep {
                event: UpdateEvent::NonFinite,
                output: out0,
            });
        }
        let current = get();
        let mut step_lr = lr;
        let mut accepted = None;
        for attempt in 0..=cfg.max_halvings {
            set(&sgd(&current, &g, T::of(step_lr)))?;
            let (cand, cand_loss) = eval()?;
            if !cfg.backtracking || (cand_loss.is_finite() && cand_loss <= loss) {
                accepted = Some((cand, cand_loss));
                halvings += attempt;
                break;
            }
            if !cfg.backtracking {
                break;
            }
            step_lr *= 0.5;
        }
        match accepted {
            Some((cand, cand_loss)) => {
                out = cand;
                loss = cand_loss;
                used_lr = step_lr;
            }
            None => {
                set(&current)?;
                if current == original {
                    let (out0, _) = eval()?;
                    return Ok(OnlineStep {
                        event: UpdateEvent::Skipped { loss_before },
                        output: out0,
                    });
                }
                break;
            }
        }
    }
    Ok(OnlineStep {
        event: UpdateEvent::Accepted {
            loss_before,
            loss_after: loss,
            lr: used_lr,
            halvings,
        },
        output: out,
    })
}

/// One online update of the denoiser for the v-step input `input`.
pub fn online_step<T: Real>(
    denoiser: &mut dyn TrainableDenoiser<T>,
    y: &Plane<T>,
    model: &ForwardModel<'_, T>,
    input: &VideoCube<T>,
    sigma: T,
    cfg: &OnlineConfig,
) -> Result<OnlineStep<T>> {
    cfg.validate()?;
    let cell = std::cell::RefCell::new(denoiser);
    adapt(
        cfg,
        cfg.lr,
        |p| cell.borrow_mut().set_parameters(p),
        || cell.borrow().parameters(),
        || {
            let d = cell.borrow();
            let v = d.denoise(input, sigma)?;
            let l = loss_with(model, y, &v)?;
            Ok((v, l))
        },
        |v| {
            let g = loss_gradient(model, y, v)?;
            Ok(cell.borrow().backward(input, sigma, &g)?.params)
        },
    )
}

/// Online update of a trainable demosaicer on `||y - H T_M D_M(m)||^2` for
/// its current input `m = q + u / rho`.
pub fn online_step_demosaic<T: Real>(
    demosaicer: &mut dyn TrainableDemosaicer<T>,
    y: &Plane<T>,
    model: &ForwardModel<'_, T>,
    mosaic: &VideoCube<T>,
    cfg: &OnlineConfig,
) -> Result<OnlineStep<T>> {
    cfg.validate()?;
    let cell = std::cell::RefCell::new(demosaicer);
    adapt(
        cfg,
        cfg.lr,
        |p| cell.borrow_mut().set_parameters(p),
        || cell.borrow().parameters(),
        || {
            let x = cell.borrow().demosaic(mosaic)?;
            let l = loss_with(model, y, &x)?;
            Ok((x, l))
        },
        |x| {
            let g = loss_gradient(model, y, x)?;
            cell.borrow().backward(mosaic, &g)
        },
    )
}

/// Demosaicer slot of an adaptive solve.
pub enum DemosaicerSlot<'a, T: Real> {
    /// Closed-form x-step.
    Closed,
    Fixed(&'a dyn Demosaicer<T>),
    Trainable(&'a mut dyn TrainableDemosaicer<T>),
}

impl<T: Real> DemosaicerSlot<'_, T> {
    fn as_dyn(&self) -> Option<&dyn Demosaicer<T>> {
        match self {
            DemosaicerSlot::Closed => None,
            DemosaicerSlot::Fixed(d) => Some(*d),
            DemosaicerSlot::Trainable(d) => Some(&**d as &dyn Demosaicer<T>),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveResult<T> {
    pub cube: VideoCube<T>,
    pub trace: Trace,
    /// Denoiser parameters after the solve.
    pub params: Vec<T>,
    /// `(iteration, event)` for every trigger.
    pub events: Vec<(usize, UpdateEvent)>,
}

/// Two-stage ADMM with online denoiser (and optionally demosaicer) updates.
pub fn adaptive_solve<'a, T: Real>(
    y: &'a Plane<T>,
    masks: &'a MaskStack<T>,
    cfa: Option<&'a CfaOperator>,
    denoiser: &mut dyn TrainableDenoiser<T>,
    demosaicer: &mut DemosaicerSlot<'_, T>,
    opts: &AdmmOptions<'a, T>,
    online: &OnlineConfig,
) -> Result<AdaptiveResult<T>> {
    online.validate()?;
    let mut engine = {
        let priors = Priors {
            denoiser: &*denoiser as &dyn Denoiser<T>,
            demosaicer: demosaicer.as_dyn(),
        };
        AdmmEngine::new(y, masks, cfa, &priors, opts)?
    };
    let model = *engine.model();
    let mut events = Vec::new();
    for (i, sigma) in opts.schedule.sigmas().into_iter().enumerate() {
        let k = i + 1;
        let change = {
            let priors = Priors {
                denoiser: &*denoiser as &dyn Denoiser<T>,
                demosaicer: demosaicer.as_dyn(),
            };
            engine.iterate(sigma, &priors)?
        };
        let mut update = None;
        if online.triggers(k) {
            let input = engine
                .state
                .denoiser_input
                .clone()
                .expect("v-step ran this iteration");
            let step = online_step(denoiser, y, &model, &input, T::of(sigma), online)?;
            if matches!(step.event, UpdateEvent::Accepted { .. }) && online.lr > 0.0 {
                engine.state.v = step.output;
            }
            if online.adapt_demosaicer {
                if let DemosaicerSlot::Trainable(d) = demosaicer {
                    let mut m = engine.state.q.clone();
                    m.axpy(T::one() / engine.state.rho, &engine.state.u);
                    let ev = online_step_demosaic(&mut **d, y, &model, &m, online)?.event;
                    events.push((k, ev));
                }
            }
            events.push((k, step.event.clone()));
            update = Some(step.event);
        }
        let loss = loss_with(&model, y, &engine.state.v)?;
        engine.refresh_last_row()?;
        let row = engine.trace.rows.last_mut().expect("row pushed by iterate");
        row.online_loss = Some(loss);
        row.update = update;
        if opts.early_stop.is_some_and(|tol| change < tol) {
            engine.trace.stopped_early = true;
            break;
        }
    }
    Ok(AdaptiveResult {
        cube: engine.output(),
        trace: engine.trace,
        params: denoiser.parameters(),
        events,
    })
}

/// Solves measurements in order, carrying the adapted parameters forward
/// and doubling `k0` after each measurement (capped at the schedule length).
#[allow(clippy::too_many_arguments)]
pub fn sequential_solve<'a, T: Real>(
    measurements: &'a [Plane<T>],
    masks: &'a MaskStack<T>,
    cfa: Option<&'a CfaOperator>,
    denoiser: &mut dyn TrainableDenoiser<T>,
    demosaicer: &mut DemosaicerSlot<'_, T>,
    opts: &AdmmOptions<'a, T>,
    online: &OnlineConfig,
    truths: Option<&'a [VideoCube<T>]>,
) -> Result<Vec<AdaptiveResult<T>>> {
    if let Some(first) = measurements.first() {
        if measurements.iter().any(|m| !m.same_shape(first)) {
            return Err(SciError::DimensionMismatch("measurements differ in shape".into()));
        }
    }
    if truths.is_some_and(|t| t.len() != measurements.len()) {
        return Err(SciError::DimensionMismatch("one ground truth per measurement".into()));
    }
    let k_max = opts.schedule.total_iters().max(1);
    let mut cfg = online.clone();
    let mut out = Vec::with_capacity(measurements.len());
    for (i, y) in measurements.iter().enumerate() {
        let mut o = opts.clone();
        o.truth = truths.map(|t| &t[i]);
        out.push(adaptive_solve(y, masks, cfa, denoiser, demosaicer, &o, &cfg)?);
        cfg.k0 = (cfg.k0 * 2).min(k_max);
    }
    Ok(out)
}

/// `D(x) = theta * x`, a one-parameter trainable "denoiser" whose online
/// loss is a quadratic in `theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleDenoiser<T> {
    pub theta: T,
}

impl<T: Real> Denoiser<T> for ScaleDenoiser<T> {
    fn denoise(&self, input: &VideoCube<T>, _sigma: T) -> Result<VideoCube<T>> {
        Ok(input.scale(self.theta))
    }

    fn name(&self) -> String {
        format!("scale({})", self.theta)
    }
}

impl<T: Real> TrainableDenoiser<T> for ScaleDenoiser<T> {
    fn parameters(&self) -> Vec<T> {
        vec![self.theta]
    }

    fn set_parameters(&mut self, flat: &[T]) -> Result<()> {
        match flat {
            [t] => {
                self.theta = *t;
                Ok(())
            }
            _ => Err(SciError::DimensionMismatch("scale denoiser has one parameter".into())),
        }
    }

    fn parameter_count(&self) -> usize {
        1
    }

    fn backward(&self, input: &VideoCube<T>, _sigma: T, out_grad: &VideoCube<T>) -> Result<PriorGradient<T>> {
        input.ensure_same_shape(out_grad, "scale denoiser out_grad")?;
        Ok(PriorGradient {
            params: vec![input.dot(out_grad)],
            input: out_grad.scale(self.theta),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (MaskStack<f64>, Plane<f64>, VideoCube<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let masks = MaskStack::random_uniform(4, 4, 2, 0.2, 1.0, &mut rng);
        let truth = VideoCube::from_vec(4, 4, 1, 2, (0..32).map(|_| rng.random()).collect()).unwrap();
        let y = masks.apply_h(&truth).unwrap();
        (masks, y, truth)
    }

    #[test]
    fn loss_at_truth_and_zero() {
        let (masks, y, truth) = toy();
        assert_eq!(online_loss(&y, &masks, None, &truth).unwrap(), 0.0);
        let ynorm: f64 = y.as_slice().iter().map(|v| v * v).sum();
        assert!((online_loss(&y, &masks, None, &truth.zeros_like()).unwrap() - ynorm).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let (masks, y, truth) = toy();
        let model = ForwardModel::new(&masks, None).unwrap();
        let mut d = ScaleDenoiser { theta: 0.7 };
        let cfg = OnlineConfig { lr: 0.0, ..Default::default() };
        let s = online_step(&mut d, &y, &model, &truth, 25.0, &cfg).unwrap();
        assert_eq!(d.theta, 0.7);
        match s.event {
            UpdateEvent::Accepted { loss_before, loss_after, .. } => assert_eq!(loss_before, loss_after),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn backtracking_never_increases_loss() {
        let (masks, y, truth) = toy();
        let model = ForwardModel::new(&masks, None).unwrap();
        for lr in [1e-3, 1e-1, 10.0, 1e4] {
            let mut d = ScaleDenoiser { theta: 0.5 };
            let cfg = OnlineConfig { lr, ..Default::default() };
            let s = online_step(&mut d, &y, &model, &truth, 25.0, &cfg).unwrap();
            match s.event {
                UpdateEvent::Accepted { loss_before, loss_after, .. } => assert!(loss_after <= loss_before),
                UpdateEvent::Skipped { .. } => assert_eq!(d.theta, 0.5),
                UpdateEvent::NonFinite => panic!("finite gradient expected"),
            }
        }
    }
}
