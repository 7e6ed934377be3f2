//! Run configuration: flat, versioned JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::OnlineConfig;
use crate::error::{Result, SciError};
use crate::priors::DenoiserSpec;
use crate::solvers::{Phase, Schedule};

pub const SCHEMA_VERSION: u32 = 1;

/// Overrides `output_dir`.
pub const ENV_OUTPUT_DIR: &str = "SCI_OUTPUT_DIR";
/// Caps worker threads for benchmark and sweep runs.
pub const ENV_THREADS: &str = "SCI_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    GapTv,
    TwoStageAdmm,
    Adaptive,
}

impl SolverKind {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| SciError::InvalidParameter(format!("unknown solver '{s}'")))
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::GapTv => "gap_tv",
            SolverKind::TwoStageAdmm => "two_stage_admm",
            SolverKind::Adaptive => "adaptive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemosaicerKind {
    /// Closed-form x-step.
    Closed,
    Bilinear,
    Malvar,
    Ddnet,
}

impl DemosaicerKind {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| SciError::InvalidParameter(format!("unknown demosaicer '{s}'")))
    }
}

/// A named schedule (`a`, `b`, `c`, `d`, `80`) or explicit phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Named(String),
    Phases(Vec<Phase>),
}

impl ScheduleSpec {
    pub fn resolve(&self) -> Result<Schedule> {
        match self {
            ScheduleSpec::Named(n) => Schedule::by_name(n),
            ScheduleSpec::Phases(p) => Schedule::new(p.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub solver: SolverKind,
    pub denoiser: DenoiserSpec,
    pub demosaicer: DemosaicerKind,
    pub demosaicer_checkpoint: Option<String>,
    pub schedule: ScheduleSpec,
    pub rho: f64,
    pub tau: f64,
    pub online: OnlineConfig,
    pub early_stop: Option<f64>,
    pub seed: u64,
    pub measurement: Option<String>,
    pub masks: Option<String>,
    pub truth: Option<String>,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            solver: SolverKind::TwoStageAdmm,
            denoiser: DenoiserSpec::default(),
            demosaicer: DemosaicerKind::Closed,
            demosaicer_checkpoint: None,
            schedule: ScheduleSpec::Named("a".into()),
            rho: 1.0,
            tau: 1.0,
            online: OnlineConfig::default(),
            early_stop: None,
            seed: 0,
            measurement: None,
            masks: None,
            truth: None,
            output_dir: "out".into(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| SciError::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SciError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SciError::Format(format!(
                "config schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (name, v) in [("rho", self.rho), ("tau", self.tau)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SciError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(tol) = self.early_stop {
            if !(tol >= 0.0) {
                return Err(SciError::InvalidParameter(format!("early_stop {tol}")));
            }
        }
        if self.demosaicer == DemosaicerKind::Ddnet && self.demosaicer_checkpoint.is_none() {
            return Err(SciError::InvalidParameter("ddnet demosaicer needs demosaicer_checkpoint".into()));
        }
        if self.solver == SolverKind::Adaptive && !matches!(self.denoiser, DenoiserSpec::Cnn { .. }) {
            return Err(SciError::InvalidParameter("adaptive solver needs a cnn denoiser".into()));
        }
        self.denoiser.validate()?;
        self.online.validate()?;
        self.schedule.resolve()?;
        Ok(())
    }

    /// Applies `SCI_OUTPUT_DIR` if set.
    pub fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            if !dir.is_empty() {
                self.output_dir = dir;
            }
        }
    }

    /// SHA-256 of the canonical JSON, excluding `output_dir` so that moving a
    /// run does not change its identity.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Worker threads: `SCI_THREADS` if set and positive, else the machine's
/// available parallelism.
pub fn thread_count() -> usize {
    std::env::var(ENV_THREADS)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_digest() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        let mut moved = cfg.clone();
        moved.output_dir = "elsewhere".into();
        assert_eq!(moved.digest(), cfg.digest());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(other.digest(), cfg.digest());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = RunConfig::from_json(r#"{"solver": "gap_tv", "schedule": [{"sigma": 10, "iters": 5}]}"#).unwrap();
        assert_eq!(cfg.solver, SolverKind::GapTv);
        assert_eq!(cfg.schedule.resolve().unwrap().total_iters(), 5);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            r#"{"schema_version": 2}"#,
            r#"{"rho": 0}"#,
            r#"{"solver": "desci"}"#,
            r#"{"schedule": "z"}"#,
            r#"{"unknown_field": 1}"#,
            r#"{"demosaicer": "ddnet"}"#,
            r#"{"solver": "adaptive"}"#,
        ] {
            assert!(RunConfig::from_json(bad).is_err(), "{bad}");
        }
    }
}
