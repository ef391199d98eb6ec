use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    LinearWarmupLinearDecay,
    Triangular,
    ReduceOnPlateau,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear_warmup_linear_decay" => Ok(Self::LinearWarmupLinearDecay),
            "triangular" => Ok(Self::Triangular),
            "reduce_on_plateau" | "plateau" => Ok(Self::ReduceOnPlateau),
            other => Err(Error::invalid(format!("unknown schedule kind {other:?}"))),
        }
    }
}

fn default_ratio() -> Option<f64> {
    Some(0.06)
}

fn default_shrink() -> f64 {
    0.5
}

fn default_patience() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub peak_rate: f64,
    /// Takes precedence over `warmup_ratio` when set.
    #[serde(default)]
    pub warmup_steps: Option<usize>,
    #[serde(default = "default_ratio")]
    pub warmup_ratio: Option<f64>,
    /// Multiplier applied on each plateau trigger.
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    /// Epochs without improvement before a plateau trigger.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Triangle period in steps; the whole run when absent.
    #[serde(default)]
    pub cycle_steps: Option<usize>,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, peak_rate: f64) -> Self {
        Self {
            kind,
            peak_rate,
            warmup_steps: None,
            warmup_ratio: default_ratio(),
            shrink: default_shrink(),
            patience: default_patience(),
            cycle_steps: None,
        }
    }

    pub fn constant(rate: f64) -> Self {
        Self {
            warmup_ratio: None,
            ..Self::new(ScheduleKind::ReduceOnPlateau, rate)
        }
        .with_shrink(1.0)
    }

    pub fn with_warmup_steps(mut self, steps: usize) -> Self {
        self.warmup_steps = Some(steps);
        self
    }

    pub fn with_shrink(mut self, shrink: f64) -> Self {
        self.shrink = shrink;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.peak_rate.is_finite() || self.peak_rate < 0.0 {
            return Err(Error::invalid(format!("peak rate {} must be finite and >= 0", self.peak_rate)));
        }
        if let Some(r) = self.warmup_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("warmup ratio {r} outside [0, 1]")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(Error::invalid(format!("shrink {} outside (0, 1]", self.shrink)));
        }
        if self.patience == 0 || self.cycle_steps == Some(0) {
            return Err(Error::invalid("patience and cycle length must be positive"));
        }
        Ok(())
    }

    pub fn warmup(&self, total_steps: usize) -> usize {
        self.warmup_steps
            .unwrap_or_else(|| (self.warmup_ratio.unwrap_or(0.0) * total_steps as f64).round() as usize)
    }

    /// Number of plateau triggers in a per-epoch history of monitored losses.
    pub fn plateau_triggers(&self, history: &[f64]) -> usize {
        let mut best = f64::INFINITY;
        let (mut bad, mut triggers) = (0, 0);
        for &loss in history {
            if loss < best {
                best = loss;
                bad = 0;
            } else {
                bad += 1;
                if bad >= self.patience {
                    triggers += 1;
                    bad = 0;
                }
            }
        }
        triggers
    }
}

/// Learning rate at optimizer step `step` (the first update is step 1).
/// `history` holds one monitored loss per finished epoch and only matters
/// for the plateau kind.
pub fn schedule_rate(s: &Schedule, step: usize, total_steps: usize, history: &[f64]) -> f64 {
    let peak = s.peak_rate;
    let warm = s.warmup(total_steps);
    let ramp = |step: usize| if warm > 0 && step < warm { step as f64 / warm as f64 } else { 1.0 };
    match s.kind {
        ScheduleKind::LinearWarmupLinearDecay => {
            if warm > 0 && step <= warm {
                peak * step as f64 / warm as f64
            } else if step >= total_steps {
                0.0
            } else {
                peak * (total_steps - step) as f64 / (total_steps - warm) as f64
            }
        }
        ScheduleKind::Triangular => {
            let cycle = s.cycle_steps.unwrap_or(total_steps).max(1);
            let pos = (step % cycle) as f64 / cycle as f64;
            peak * (1.0 - (2.0 * pos - 1.0).abs())
        }
        ScheduleKind::ReduceOnPlateau => {
            peak * s.shrink.powi(s.plateau_triggers(history) as i32) * ramp(step)
        }
    }
}
