use serde::{Deserialize, Serialize};

use crate::error::{Result, SciError};

/// `sigma` (0-255 scale) held for `iters` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub sigma: f64,
    pub iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub phases: Vec<Phase>,
}

fn phases(list: &[(f64, usize)]) -> Schedule {
    Schedule {
        phases: list.iter().map(|&(sigma, iters)| Phase { sigma, iters }).collect(),
    }
}

impl Schedule {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        let s = Schedule { phases };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(SciError::InvalidParameter("schedule has no phases".into()));
        }
        for p in &self.phases {
            if p.iters == 0 || !(p.sigma > 0.0) || !p.sigma.is_finite() {
                return Err(SciError::InvalidParameter(format!(
                    "schedule phase sigma={} iters={} (need sigma > 0, iters >= 1)",
                    p.sigma, p.iters
                )));
            }
        }
        if self.phases.windows(2).any(|w| w[1].sigma > w[0].sigma) {
            log::warn!("schedule sigma is not decreasing: {:?}", self.phases);
        }
        Ok(())
    }

    /// 25 (15 it), 12 (7 it), 6 (3 it).
    pub fn setting_a() -> Self {
        phases(&[(25.0, 15), (12.0, 7), (6.0, 3)])
    }

    /// 25, 12, 6 with 15 iterations each.
    pub fn setting_b() -> Self {
        phases(&[(25.0, 15), (12.0, 15), (6.0, 15)])
    }

    /// 12 (24 it), 6 (12 it).
    pub fn setting_c() -> Self {
        phases(&[(12.0, 24), (6.0, 12)])
    }

    /// 25 (24 it), 12 (12 it), 6 (6 it).
    pub fn setting_d() -> Self {
        phases(&[(25.0, 24), (12.0, 12), (6.0, 6)])
    }

    /// Setting A stretched to 80 iterations with the same 25/12/6 levels
    /// and roughly the same 15:7:3 proportions.
    pub fn fixed_budget_80() -> Self {
        phases(&[(25.0, 48), (12.0, 22), (6.0, 10)])
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::setting_a()),
            "b" => Ok(Self::setting_b()),
            "c" => Ok(Self::setting_c()),
            "d" => Ok(Self::setting_d()),
            "80" | "budget80" => Ok(Self::fixed_budget_80()),
            other => Err(SciError::InvalidParameter(format!("unknown schedule '{other}'"))),
        }
    }

    /// A single phase.
    pub fn constant(sigma: f64, iters: usize) -> Self {
        phases(&[(sigma, iters)])
    }

    /// `K_max`.
    pub fn total_iters(&self) -> usize {
        self.phases.iter().map(|p| p.iters).sum()
    }

    /// Noise level of every iteration, in order.
    pub fn sigmas(&self) -> Vec<f64> {
        self.phases
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.sigma, p.iters))
            .collect()
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::setting_a()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(Schedule::setting_a().total_iters(), 25);
        assert_eq!(Schedule::setting_b().total_iters(), 45);
        assert_eq!(Schedule::setting_c().total_iters(), 36);
        assert_eq!(Schedule::setting_d().total_iters(), 42);
        assert_eq!(Schedule::fixed_budget_80().total_iters(), 80);
        let s = Schedule::setting_a().sigmas();
        assert_eq!((s[0], s[14], s[15], s[21], s[22], s[24]), (25.0, 25.0, 12.0, 12.0, 6.0, 6.0));
    }

    #[test]
    fn invalid_phases_rejected() {
        assert!(Schedule::new(vec![]).is_err());
        assert!(Schedule::new(vec![Phase { sigma: 10.0, iters: 0 }]).is_err());
        assert!(Schedule::new(vec![Phase { sigma: 0.0, iters: 3 }]).is_err());
        // increasing sigma is only a warning
        assert!(Schedule::new(vec![Phase { sigma: 6.0, iters: 1 }, Phase { sigma: 12.0, iters: 1 }]).is_ok());
        assert!(Schedule::by_name("z").is_err());
    }
}
