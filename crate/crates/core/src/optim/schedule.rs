//! Linear warmup followed by polynomial decay.

use super::TrainConfig;
use crate::error::{Error, Result};

/// `round(warmup_frac * total_steps)`, clamped to `[1, total_steps]`.
pub fn warmup_steps(total_steps: u64, cfg: &TrainConfig) -> u64 {
    ((cfg.warmup_frac * total_steps as f64).round() as u64).clamp(1, total_steps.max(1))
}

pub fn lr_at(step: u64, total_steps: u64, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidArgument("total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} beyond total_steps {total_steps}"
        )));
    }
    if step == total_steps {
        return Ok(cfg.end_lr);
    }
    let warmup = warmup_steps(total_steps, cfg);
    if step < warmup {
        return Ok(cfg.peak_lr * step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
    Ok(cfg.end_lr + (cfg.peak_lr - cfg.end_lr) * (1.0 - progress).powf(cfg.decay_power))
}
