//! Turns a [`RunConfig`] into a reconstruction.

use std::path::Path;

use crate::adaptive::{adaptive_solve, DemosaicerSlot};
use crate::error::{Result, SciError};
use crate::io::{load_ddnet, load_prior_params, DemosaicerKind, RunConfig, SolverKind};
use crate::model::{CfaOperator, MaskStack, Plane, VideoCube};
use crate::priors::{
    BilinearDemosaicer, CnnDenoiser, DdnetParams, Demosaicer, Denoiser, DenoiserSpec, IdentityDenoiser,
    MalvarDemosaicer, TrainableDenoiser, TvDenoiser,
};
use crate::scalar::Real;
use crate::solvers::{gap_color_baseline, gap_solve, two_stage_admm, AdmmOptions, GapOptions, Priors, Trace, UpdateEvent};

#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub cube: VideoCube<T>,
    pub trace: Trace,
    /// Adapted denoiser weights (adaptive solver only).
    pub adapted: Option<CnnDenoiser<T>>,
    pub events: Vec<(usize, UpdateEvent)>,
}

pub fn load_cnn<T: Real>(checkpoint: Option<&str>, seed: u64) -> Result<CnnDenoiser<T>> {
    match checkpoint {
        Some(p) => CnnDenoiser::from_params(load_prior_params(Path::new(p))?.0),
        None => Ok(CnnDenoiser::new(seed)),
    }
}

pub fn build_denoiser<T: Real>(spec: &DenoiserSpec, seed: u64) -> Result<Box<dyn Denoiser<T>>> {
    Ok(match spec {
        DenoiserSpec::Tv {
            weight,
            iters,
            sigma_reference,
        } => Box::new(TvDenoiser {
            weight: *weight,
            iters: *iters,
            sigma_reference: *sigma_reference,
        }),
        DenoiserSpec::Identity => Box::new(IdentityDenoiser),
        DenoiserSpec::Cnn { checkpoint } => Box::new(load_cnn::<T>(checkpoint.as_deref(), seed)?),
        DenoiserSpec::External { name } => {
            return Err(SciError::InvalidParameter(format!(
                "external denoiser '{name}' must be supplied through the library API"
            )))
        }
    })
}

fn build_demosaicer<T: Real>(cfg: &RunConfig) -> Result<Option<Box<dyn Demosaicer<T>>>> {
    Ok(match cfg.demosaicer {
        DemosaicerKind::Closed => None,
        DemosaicerKind::Bilinear => Some(Box::new(BilinearDemosaicer)),
        DemosaicerKind::Malvar => Some(Box::new(MalvarDemosaicer)),
        DemosaicerKind::Ddnet => Some(Box::new(load_ddnet_checkpoint::<T>(cfg)?)),
    })
}

fn load_ddnet_checkpoint<T: Real>(cfg: &RunConfig) -> Result<DdnetParams<T>> {
    let path = cfg
        .demosaicer_checkpoint
        .as_deref()
        .ok_or_else(|| SciError::InvalidParameter("ddnet demosaicer needs demosaicer_checkpoint".into()))?;
    Ok(load_ddnet(Path::new(path))?.0)
}

/// Runs the configured solver. `truth` only feeds the trace's PSNR column.
pub fn solve<T: Real>(
    cfg: &RunConfig,
    y: &Plane<T>,
    masks: &MaskStack<T>,
    cfa: Option<&CfaOperator>,
    truth: Option<&VideoCube<T>>,
) -> Result<RunOutput<T>> {
    cfg.validate()?;
    let schedule = cfg.schedule.resolve()?;
    if cfa.is_none() && cfg.demosaicer != DemosaicerKind::Closed {
        log::warn!("grayscale measurement: demosaicer setting ignored");
    }
    let plain = |cube, trace| RunOutput {
        cube,
        trace,
        adapted: None,
        events: Vec::new(),
    };
    match cfg.solver {
        SolverKind::GapTv => {
            let den = build_denoiser::<T>(&cfg.denoiser, cfg.seed)?;
            let r = match cfa {
                Some(c) => gap_color_baseline(y, masks, c, den.as_ref(), &schedule)?,
                None => gap_solve(
                    y,
                    masks,
                    den.as_ref(),
                    &GapOptions {
                        schedule,
                        truth,
                        ..Default::default()
                    },
                )?,
            };
            Ok(plain(r.cube, r.trace))
        }
        SolverKind::TwoStageAdmm => {
            let den = build_denoiser::<T>(&cfg.denoiser, cfg.seed)?;
            let dem = if cfa.is_some() { build_demosaicer::<T>(cfg)? } else { None };
            let priors = Priors {
                denoiser: den.as_ref(),
                demosaicer: dem.as_deref(),
            };
            let opts = admm_options(cfg, schedule, truth);
            let r = two_stage_admm(y, masks, cfa, &priors, &opts)?;
            Ok(plain(r.cube, r.trace))
        }
        SolverKind::Adaptive => {
            let checkpoint = match &cfg.denoiser {
                DenoiserSpec::Cnn { checkpoint } => checkpoint.clone(),
                _ => return Err(SciError::InvalidParameter("adaptive solver needs a cnn denoiser".into())),
            };
            let mut den = load_cnn::<T>(checkpoint.as_deref(), cfg.seed)?;
            let opts = admm_options(cfg, schedule, truth);
            let mut fixed = None;
            let mut trainable = None;
            if cfa.is_some() {
                match cfg.demosaicer {
                    DemosaicerKind::Ddnet if cfg.online.adapt_demosaicer => {
                        trainable = Some(load_ddnet_checkpoint::<T>(cfg)?)
                    }
                    _ => fixed = build_demosaicer::<T>(cfg)?,
                }
            }
            let mut slot = match (trainable.as_mut(), fixed.as_deref()) {
                (Some(t), _) => DemosaicerSlot::Trainable(t),
                (None, Some(f)) => DemosaicerSlot::Fixed(f),
                (None, None) => DemosaicerSlot::Closed,
            };
            let r = adaptive_solve(y, masks, cfa, &mut den as &mut dyn TrainableDenoiser<T>, &mut slot, &opts, &cfg.online)?;
            Ok(RunOutput {
                cube: r.cube,
                trace: r.trace,
                adapted: Some(den),
                events: r.events,
            })
        }
    }
}

fn admm_options<'a, T: Real>(
    cfg: &RunConfig,
    schedule: crate::solvers::Schedule,
    truth: Option<&'a VideoCube<T>>,
) -> AdmmOptions<'a, T> {
    AdmmOptions {
        rho: cfg.rho,
        tau: cfg.tau,
        schedule,
        early_stop: cfg.early_stop,
        init: None,
        truth,
        record_steps: false,
    }
}
