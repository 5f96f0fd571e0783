//! Trainer settings and the per-step learning rate.

use serde::{Deserialize, Serialize};

use super::CurriculumError;

/// Sample-budget factor for the desk preset.
pub const DESK_FACTOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub batch_size: usize,
    /// Maximum text length in tokens, prompt included.
    pub text_cutoff: usize,
    /// Fraction of a stage's steps spent ramping up to the peak rate.
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Multiplies every stage's peak rate. 1.0 keeps the curriculum values.
    pub lr_scale: f64,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub max_grad_norm: Option<f64>,
}

impl TrainerConfig {
    pub fn preset() -> Self {
        Self {
            batch_size: 256,
            text_cutoff: 108,
            warmup_fraction: 0.05,
            seed: 0,
            lr_scale: 1.0,
            max_grad_norm: None,
        }
    }

    /// Small batches, a raised rate and clipping so the toy model moves
    /// within a few hundred steps of plain SGD.
    pub fn desk() -> Self {
        Self {
            batch_size: 8,
            lr_scale: 5000.0,
            max_grad_norm: Some(1.0),
            ..Self::preset()
        }
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.batch_size == 0 || self.text_cutoff == 0 {
            return Err(CurriculumError::Config("batch_size and text_cutoff must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(CurriculumError::Config(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction)));
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return Err(CurriculumError::Config("max_grad_norm must be positive".into()));
        }
        if !(self.lr_scale > 0.0 && self.lr_scale.is_finite()) {
            return Err(CurriculumError::Config("lr_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Number of warmup steps: `ceil(fraction · total)`, kept below `total` so
/// the peak is always reached.
pub fn warmup_steps(total_steps: u64, warmup_fraction: f64) -> u64 {
    let w = (warmup_fraction * total_steps as f64).ceil() as u64;
    w.min(total_steps.saturating_sub(1))
}

/// Linear ramp from 0 to `peak` over the warmup, then linear decay that
/// would reach 0 at `total_steps`.
pub fn lr_at(step: u64, total_steps: u64, cfg: &TrainerConfig, peak: f64) -> Result<f64, CurriculumError> {
    if total_steps == 0 {
        return Err(CurriculumError::Config("schedule with zero steps".into()));
    }
    if step >= total_steps {
        return Err(CurriculumError::Config(format!("step {step} beyond schedule of {total_steps}")));
    }
    let w = warmup_steps(total_steps, cfg.warmup_fraction);
    Ok(if step < w {
        peak * step as f64 / w as f64
    } else if step == w {
        peak
    } else {
        peak * (total_steps - step) as f64 / (total_steps - w) as f64
    })
}
