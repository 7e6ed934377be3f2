//! Two-stage plug-and-play ADMM.
//!
//! The outer split introduces `q = T_M x` (mosaic domain) so the SCI
//! fidelity has a one-shot solution thanks to the diagonal `H H^T`; the
//! inner split introduces `v = x` so the scene prior can be any denoiser.
//! One iteration runs q, x, v, w, u in that order.
//!
//! With a demosaicing network in the x-step ("network mode") the x-step no
//! longer sees `v` or `w`, so the q- and u-steps read `T_M v` instead of
//! `T_M x` and `w` stays at zero (its update would only accumulate the
//! denoiser's corrections and feed them back with the wrong sign).

use super::schedule::Schedule;
use super::trace::{Trace, TraceRow};
use crate::error::{Result, SciError};
use crate::metrics::psnr;
use crate::model::{init_estimate, CfaOperator, ForwardModel, MaskStack, Plane, VideoCube};
use crate::priors::{BilinearDemosaicer, Demosaicer, Denoiser};
use crate::scalar::Real;

/// Solver variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    Q,
    U,
    X,
    V,
    W,
}

/// One of the five update steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Q,
    X,
    V,
    W,
    U,
}

/// Which versions a step consumed and which version it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: Step,
    pub reads: Vec<(Var, usize)>,
    pub writes: (Var, usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Versions {
    pub q: usize,
    pub u: usize,
    pub x: usize,
    pub v: usize,
    pub w: usize,
}

impl Versions {
    pub fn get(&self, var: Var) -> usize {
        match var {
            Var::Q => self.q,
            Var::U => self.u,
            Var::X => self.x,
            Var::V => self.v,
            Var::W => self.w,
        }
    }

    fn bump(&mut self, var: Var) -> usize {
        let slot = match var {
            Var::Q => &mut self.q,
            Var::U => &mut self.u,
            Var::X => &mut self.x,
            Var::V => &mut self.v,
            Var::W => &mut self.w,
        };
        *slot += 1;
        *slot
    }
}

#[derive(Clone, Debug)]
pub struct SolverState<T> {
    /// Mosaic-domain copy of the scene, `B` single-channel frames.
    pub q: VideoCube<T>,
    /// Outer dual, same shape as `q`.
    pub u: VideoCube<T>,
    /// Scene estimate (grayscale or RGB).
    pub x: VideoCube<T>,
    /// Denoiser output.
    pub v: VideoCube<T>,
    /// Inner dual.
    pub w: VideoCube<T>,
    /// `T_M x - u / rho` from the latest q-step.
    pub p: VideoCube<T>,
    /// `x - w / tau` as handed to the latest v-step.
    pub denoiser_input: Option<VideoCube<T>>,
    pub rho: T,
    pub tau: T,
    /// Completed iterations.
    pub k: usize,
    pub versions: Versions,
    pub log: Option<Vec<StepRecord>>,
}

impl<T: Real> SolverState<T> {
    /// `x0` in the scene domain; `q0 = T_M x0`, duals zero, `v0 = x0`.
    pub fn new(x0: VideoCube<T>, model: &ForwardModel<'_, T>, rho: f64, tau: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
            return Err(SciError::InvalidParameter(format!(
                "penalties must be positive (rho={rho}, tau={tau})"
            )));
        }
        let expected = (model.masks.height(), model.masks.width(), model.scene_channels(), model.masks.frames());
        if x0.shape() != expected {
            return Err(SciError::DimensionMismatch(format!(
                "initial scene {:?} vs expected {:?}",
                x0.shape(),
                expected
            )));
        }
        let q = model.mosaic(&x0)?;
        Ok(SolverState {
            u: q.zeros_like(),
            p: q.clone(),
            q,
            v: x0.clone(),
            w: x0.zeros_like(),
            x: x0,
            denoiser_input: None,
            rho: T::of(rho),
            tau: T::of(tau),
            k: 0,
            versions: Versions::default(),
            log: None,
        })
    }

    pub fn record_steps(&mut self) {
        self.log = Some(Vec::new());
    }

    fn var(&self, v: Var) -> &VideoCube<T> {
        match v {
            Var::Q => &self.q,
            Var::U => &self.u,
            Var::X => &self.x,
            Var::V => &self.v,
            Var::W => &self.w,
        }
    }

    fn note(&mut self, step: Step, reads: &[Var], writes: Var) {
        let reads: Vec<_> = reads.iter().map(|&r| (r, self.versions.get(r))).collect();
        let written = self.versions.bump(writes);
        if let Some(log) = &mut self.log {
            log.push(StepRecord {
                step,
                reads,
                writes: (writes, written),
            });
        }
    }
}

/// q-step with the scene taken from `scene` (x, or v in network mode):
/// `p = T_M scene - u/rho`, `q = p + H^T[(y - H p) / (rho + r)]`.
pub fn q_update_from<T: Real>(
    state: &mut SolverState<T>,
    y: &Plane<T>,
    model: &ForwardModel<'_, T>,
    scene: Var,
) -> Result<()> {
    let rho = state.rho;
    let mut p = model.mosaic(state.var(scene))?;
    p.axpy(-T::one() / rho, &state.u);
    let hp = model.masks.apply_h(&p)?;
    if !hp.same_shape(y) {
        return Err(SciError::DimensionMismatch("measurement vs masks".into()));
    }
    let e: Vec<T> = y.as_slice().iter().zip(hp.as_slice()).map(|(&a, &b)| a - b).collect();
    let e = Plane::from_vec(y.height(), y.width(), e)?;
    let correction = model.masks.adjoint_weighted(&e, |r| rho + r)?;
    state.q = p.add(&correction);
    state.p = p;
    state.note(Step::Q, &[scene, Var::U], Var::Q);
    Ok(())
}

/// q-step on the current `x`.
pub fn q_update<T: Real>(state: &mut SolverState<T>, y: &Plane<T>, model: &ForwardModel<'_, T>) -> Result<()> {
    q_update_from(state, y, model, Var::X)
}

/// `u <- u + (q - T_M scene)`.
pub fn u_update_from<T: Real>(state: &mut SolverState<T>, model: &ForwardModel<'_, T>, scene: Var) -> Result<()> {
    let tm = model.mosaic(state.var(scene))?;
    let d = state.q.sub(&tm);
    state.u.axpy(T::one(), &d);
    state.note(Step::U, &[Var::Q, scene], Var::U);
    Ok(())
}

pub fn u_update<T: Real>(state: &mut SolverState<T>, model: &ForwardModel<'_, T>) -> Result<()> {
    u_update_from(state, model, Var::X)
}

/// Per-pixel minimizer of `rho/2 ||q - T_M x + u/rho||^2 + tau/2 ||x - v - w/tau||^2`:
/// `x_j = ([rho T^T q + T^T u]_j + tau v_j + w_j) / (rho s_j + tau)`.
pub fn x_update_closed<T: Real>(state: &mut SolverState<T>, model: &ForwardModel<'_, T>) -> Result<()> {
    let (rho, tau) = (state.rho, state.tau);
    let mut num = model.mosaic_adjoint(&state.q)?.scale(rho);
    num.axpy(T::one(), &model.mosaic_adjoint(&state.u)?);
    num.axpy(tau, &state.v);
    num.axpy(T::one(), &state.w);
    let x = match model.cfa {
        None => num.scale(T::one() / (rho + tau)),
        Some(cfa) => {
            let s: Vec<T> = cfa.sampling_indicator();
            let mut x = num;
            let frame_len = s.len();
            for b in 0..x.frames() {
                for (xv, &sv) in x.frame_mut(b).iter_mut().zip(&s[..frame_len]) {
                    *xv /= rho * sv + tau;
                }
            }
            x
        }
    };
    state.x = x;
    state.note(Step::X, &[Var::Q, Var::U, Var::V, Var::W], Var::X);
    Ok(())
}

/// `x = D_M(q + u/rho)`.
pub fn x_update_demosaic<T: Real>(state: &mut SolverState<T>, demosaicer: &dyn Demosaicer<T>) -> Result<()> {
    let mut m = state.q.clone();
    m.axpy(T::one() / state.rho, &state.u);
    let x = demosaicer.demosaic(&m)?;
    state.x.ensure_same_shape(&x, "demosaicer output")?;
    state.x = x;
    state.note(Step::X, &[Var::Q, Var::U], Var::X);
    Ok(())
}

/// `v = D_sigma(x - w/tau)`.
pub fn v_update<T: Real>(state: &mut SolverState<T>, denoiser: &dyn Denoiser<T>, sigma: T) -> Result<()> {
    let mut input = state.x.clone();
    input.axpy(-T::one() / state.tau, &state.w);
    let v = denoiser.denoise(&input, sigma)?;
    input.ensure_same_shape(&v, "denoiser output")?;
    state.v = v;
    state.denoiser_input = Some(input);
    state.note(Step::V, &[Var::X, Var::W], Var::V);
    Ok(())
}

/// Inner dual ascent on the constraint `x = v`: `w <- w - (x - v)`.
///
/// The sign matches the `+ w / tau` offsets used by the x- and v-steps.
pub fn w_update<T: Real>(state: &mut SolverState<T>) -> Result<()> {
    let d = state.x.sub(&state.v);
    state.w.axpy(-T::one(), &d);
    state.note(Step::W, &[Var::X, Var::V], Var::W);
    Ok(())
}

/// Denoiser and optional demosaicer plugged into one solve. Without a
/// demosaicer the x-step is the closed form.
#[derive(Clone, Copy)]
pub struct Priors<'a, T: Real> {
    pub denoiser: &'a dyn Denoiser<T>,
    pub demosaicer: Option<&'a dyn Demosaicer<T>>,
}

#[derive(Clone, Debug)]
pub struct AdmmOptions<'a, T> {
    pub rho: f64,
    pub tau: f64,
    pub schedule: Schedule,
    /// Stop once `||v_k - v_{k-1}|| / ||v_{k-1}||` falls below this.
    pub early_stop: Option<f64>,
    /// Scene-domain starting point; defaults to the (demosaicked)
    /// least-norm estimate.
    pub init: Option<VideoCube<T>>,
    pub truth: Option<&'a VideoCube<T>>,
    pub record_steps: bool,
}

impl<T> Default for AdmmOptions<'_, T> {
    fn default() -> Self {
        AdmmOptions {
            rho: 1.0,
            tau: 1.0,
            schedule: Schedule::default(),
            early_stop: None,
            init: None,
            truth: None,
            record_steps: false,
        }
    }
}

/// Default scene-domain starting point.
pub fn default_init<T: Real>(
    y: &Plane<T>,
    masks: &MaskStack<T>,
    cfa: Option<&CfaOperator>,
    demosaicer: Option<&dyn Demosaicer<T>>,
) -> Result<VideoCube<T>> {
    let q0 = init_estimate(y, masks)?;
    match (cfa, demosaicer) {
        (None, _) => Ok(q0),
        (Some(_), Some(d)) => d.demosaic(&q0),
        (Some(_), None) => BilinearDemosaicer.demosaic(&q0),
    }
}

/// Steps the two-stage iteration one outer iteration at a time.
pub struct AdmmEngine<'a, T: Real> {
    y: &'a Plane<T>,
    model: ForwardModel<'a, T>,
    pub state: SolverState<T>,
    network: bool,
    truth: Option<&'a VideoCube<T>>,
    pub trace: Trace,
}

impl<'a, T: Real> AdmmEngine<'a, T> {
    pub fn new(
        y: &'a Plane<T>,
        masks: &'a MaskStack<T>,
        cfa: Option<&'a CfaOperator>,
        priors: &Priors<'_, T>,
        opts: &AdmmOptions<'a, T>,
    ) -> Result<Self> {
        let model = ForwardModel::new(masks, cfa)?;
        if y.height() != masks.height() || y.width() != masks.width() {
            return Err(SciError::DimensionMismatch(format!(
                "measurement {}x{} vs masks {}x{}",
                y.height(),
                y.width(),
                masks.height(),
                masks.width()
            )));
        }
        opts.schedule.validate()?;
        let x0 = match &opts.init {
            Some(x) => x.clone(),
            None => default_init(y, masks, cfa, priors.demosaicer)?,
        };
        let mut state = SolverState::new(x0, &model, opts.rho, opts.tau)?;
        if opts.record_steps {
            state.record_steps();
        }
        if let Some(t) = opts.truth {
            state.x.ensure_same_shape(t, "ground truth")?;
        }
        let initial_fidelity = model.residual(y, &state.x)?.norm().to_f64_lossy();
        Ok(AdmmEngine {
            y,
            model,
            state,
            network: priors.demosaicer.is_some(),
            truth: opts.truth,
            trace: Trace {
                initial_fidelity,
                ..Trace::default()
            },
        })
    }

    pub fn model(&self) -> &ForwardModel<'a, T> {
        &self.model
    }

    pub fn measurement(&self) -> &Plane<T> {
        self.y
    }

    /// Runs q, x, v, w, u once and appends a trace row. Returns the relative
    /// change of `v`.
    pub fn iterate(&mut self, sigma: f64, priors: &Priors<'_, T>) -> Result<f64> {
        let scene = if self.network { Var::V } else { Var::X };
        let v_prev = self.state.v.clone();
        q_update_from(&mut self.state, self.y, &self.model, scene)?;
        match priors.demosaicer {
            Some(d) if self.network => x_update_demosaic(&mut self.state, d)?,
            _ => x_update_closed(&mut self.state, &self.model)?,
        }
        v_update(&mut self.state, priors.denoiser, T::of(sigma))?;
        if !self.network {
            w_update(&mut self.state)?;
        }
        u_update_from(&mut self.state, &self.model, scene)?;
        self.state.k += 1;
        if !self.state.v.is_finite() || !self.state.x.is_finite() {
            return Err(SciError::NonFinite(format!("solver state at iteration {}", self.state.k)));
        }
        let row = self.row(sigma)?;
        self.trace.rows.push(row);
        let denom = v_prev.norm().to_f64_lossy().max(f64::MIN_POSITIVE);
        Ok(self.state.v.sub(&v_prev).norm().to_f64_lossy() / denom)
    }

    fn row(&self, sigma: f64) -> Result<TraceRow> {
        let s = &self.state;
        let tm = self.model.mosaic(&s.x)?;
        let psnr = match self.truth {
            Some(t) => Some(psnr(&s.v.clip(T::zero(), T::one()), t)?),
            None => None,
        };
        Ok(TraceRow {
            iter: s.k,
            sigma,
            fidelity: self.model.residual(self.y, &s.x)?.norm().to_f64_lossy(),
            primal_q: Some(s.q.sub(&tm).norm().to_f64_lossy()),
            primal_x: Some(s.x.sub(&s.v).norm().to_f64_lossy()),
            psnr,
            online_loss: None,
            update: None,
        })
    }

    /// Recomputes the newest trace row after outside edits to the state.
    pub(crate) fn refresh_last_row(&mut self) -> Result<()> {
        if let Some(sigma) = self.trace.rows.last().map(|r| r.sigma) {
            let row = self.row(sigma)?;
            *self.trace.rows.last_mut().expect("row exists") = row;
        }
        Ok(())
    }

    /// Final estimate: `v` clipped to `[0, 1]`.
    pub fn output(&self) -> VideoCube<T> {
        self.state.v.clip(T::zero(), T::one())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult<T> {
    pub cube: VideoCube<T>,
    pub trace: Trace,
    pub state: SolverState<T>,
}

/// Runs the full schedule (or until early stopping).
pub fn two_stage_admm<'a, T: Real>(
    y: &'a Plane<T>,
    masks: &'a MaskStack<T>,
    cfa: Option<&'a CfaOperator>,
    priors: &Priors<'_, T>,
    opts: &AdmmOptions<'a, T>,
) -> Result<SolveResult<T>> {
    let mut engine = AdmmEngine::new(y, masks, cfa, priors, opts)?;
    for sigma in opts.schedule.sigmas() {
        let change = engine.iterate(sigma, priors)?;
        if opts.early_stop.is_some_and(|tol| change < tol) {
            engine.trace.stopped_early = true;
            break;
        }
    }
    Ok(SolveResult {
        cube: engine.output(),
        trace: engine.trace,
        state: engine.state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::IdentityDenoiser;

    fn gray_state(q: f64, u: f64, v: f64, w: f64) -> (MaskStack<f64>, SolverState<f64>) {
        let masks = MaskStack::new(VideoCube::filled(2, 2, 1, 1, 1.0)).unwrap();
        let model = ForwardModel::new(&masks, None).unwrap();
        let mut s = SolverState::new(VideoCube::filled(2, 2, 1, 1, 0.0), &model, 1.0, 2.0).unwrap();
        s.q = VideoCube::filled(2, 2, 1, 1, q);
        s.u = VideoCube::filled(2, 2, 1, 1, u);
        s.v = VideoCube::filled(2, 2, 1, 1, v);
        s.w = VideoCube::filled(2, 2, 1, 1, w);
        (masks, s)
    }

    #[test]
    fn grayscale_closed_form() {
        let (masks, mut s) = gray_state(0.4, 0.1, 0.6, 0.2);
        let model = ForwardModel::new(&masks, None).unwrap();
        x_update_closed(&mut s, &model).unwrap();
        let want = (1.0 * 0.4 + 0.1 + 2.0 * 0.6 + 0.2) / 3.0;
        assert!(s.x.as_slice().iter().all(|&x| (x - want).abs() < 1e-15));
    }

    #[test]
    fn zero_masks_give_q_equal_p() {
        let masks = MaskStack::new(VideoCube::zeros(2, 2, 1, 2)).unwrap();
        let model = ForwardModel::new(&masks, None).unwrap();
        let x0 = VideoCube::from_vec(2, 2, 1, 2, (0..8).map(|k| k as f64 / 8.0).collect()).unwrap();
        let mut s = SolverState::new(x0, &model, 2.0, 1.0).unwrap();
        s.u = VideoCube::filled(2, 2, 1, 2, 0.5);
        let y = Plane::filled(2, 2, 0.3);
        q_update(&mut s, &y, &model).unwrap();
        assert_eq!(s.q, s.p);
        assert!((s.p.get(0, 0, 0, 0) - (0.0 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn single_frame_q_scalar_algebra() {
        let (masks, mut s) = gray_state(0.0, 0.0, 0.0, 0.0);
        let model = ForwardModel::new(&masks, None).unwrap();
        s.x = VideoCube::filled(2, 2, 1, 1, 0.2);
        let y = Plane::filled(2, 2, 0.8);
        q_update(&mut s, &y, &model).unwrap();
        let want = 0.2 + (0.8 - 0.2) / 2.0;
        assert!(s.q.as_slice().iter().all(|&q| (q - want).abs() < 1e-15));
    }

    #[test]
    fn dual_updates() {
        let (masks, mut s) = gray_state(0.5, 0.0, 0.0, 0.0);
        let model = ForwardModel::new(&masks, None).unwrap();
        s.x = VideoCube::filled(2, 2, 1, 1, 0.5);
        u_update(&mut s, &model).unwrap();
        assert!(s.u.as_slice().iter().all(|&u| u == 0.0));
        s.x = VideoCube::filled(2, 2, 1, 1, 0.25);
        u_update(&mut s, &model).unwrap();
        u_update(&mut s, &model).unwrap();
        assert!(s.u.as_slice().iter().all(|&u| (u - 0.5).abs() < 1e-15));

        s.v = s.x.clone();
        w_update(&mut s).unwrap();
        assert!(s.w.as_slice().iter().all(|&w| w == 0.0));
        s.v = VideoCube::filled(2, 2, 1, 1, 0.0);
        w_update(&mut s).unwrap();
        assert!(s.w.as_slice().iter().all(|&w| (w + 0.25).abs() < 1e-15));
    }

    #[test]
    fn identity_denoiser_v_step() {
        let (_, mut s) = gray_state(0.0, 0.0, 0.0, 0.4);
        s.x = VideoCube::filled(2, 2, 1, 1, 0.9);
        v_update(&mut s, &IdentityDenoiser, 25.0).unwrap();
        assert!(s.v.as_slice().iter().all(|&v| (v - (0.9 - 0.2)).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_penalties() {
        let masks = MaskStack::new(VideoCube::filled(2, 2, 1, 1, 1.0)).unwrap();
        let model = ForwardModel::new(&masks, None).unwrap();
        assert!(SolverState::new(VideoCube::<f64>::zeros(2, 2, 1, 1), &model, 0.0, 1.0).is_err());
        assert!(SolverState::new(VideoCube::<f64>::zeros(2, 2, 1, 1), &model, 1.0, -1.0).is_err());
    }
}
