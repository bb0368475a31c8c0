//! Noise schedules: the cumulative signal level alpha[t] per diffusion step,
//! with alpha[0] = 1 and alpha strictly decreasing to a small terminal value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// beta linearly spaced 1e-4..0.02 over T steps, alpha = cumulative
    /// product of (1 - beta). Needs T large enough that alpha[T] <= 0.01.
    DdpmLinearBeta,
    /// Signal amplitude sqrt(alpha[t]) decays linearly from 1 to 0.1, so
    /// alpha[T] = 0.01 exactly; a flow-style linear decay usable by the
    /// epsilon-path trainer.
    FlowLinear,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleKind::DdpmLinearBeta => f.write_str("ddpm_linear_beta"),
            ScheduleKind::FlowLinear => f.write_str("flow_linear"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    /// alpha[t] for t = 0..=T.
    alpha: Vec<f64>,
}

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, t_max: usize) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::InvalidArgument("schedule needs T >= 1".into()));
        }
        let mut alpha = Vec::with_capacity(t_max + 1);
        alpha.push(1.0);
        match kind {
            ScheduleKind::DdpmLinearBeta => {
                let mut prod = 1.0;
                for t in 0..t_max {
                    let frac = if t_max == 1 { 0.0 } else { t as f64 / (t_max - 1) as f64 };
                    let beta = BETA_START + (BETA_END - BETA_START) * frac;
                    prod *= 1.0 - beta;
                    alpha.push(prod);
                }
            }
            ScheduleKind::FlowLinear => {
                for t in 1..=t_max {
                    let u = t as f64 / t_max as f64;
                    let amp = 1.0 - 0.9 * u;
                    alpha.push(amp * amp);
                }
            }
        }
        let schedule = Self { kind, alpha };
        schedule.validate()?;
        Ok(schedule)
    }

    fn validate(&self) -> Result<()> {
        let a = &self.alpha;
        if a[0] != 1.0 {
            return Err(Error::InvalidArgument("alpha[0] must be 1".into()));
        }
        for t in 1..a.len() {
            if !(a[t] > 0.0 && a[t] <= 1.0) || a[t] >= a[t - 1] {
                return Err(Error::InvalidArgument(format!(
                    "alpha must be strictly decreasing in (0, 1], broken at t={t}"
                )));
            }
        }
        let last = *a.last().unwrap();
        if last > 0.01 {
            return Err(Error::InvalidArgument(format!(
                "terminal alpha {last:.4} > 0.01; increase T (kind {})",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn t_max(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }
}
