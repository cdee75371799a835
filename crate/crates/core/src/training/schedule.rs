//! Linear warmup followed by single-cycle cosine annealing.

use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::TrainConfig;

pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::input(format!("epoch {epoch} outside [0, {})", cfg.epochs)));
    }
    let w = cfg.warmup_epochs;
    if epoch < w {
        return Ok(cfg.base_lr * (epoch + 1) as f64 / w as f64);
    }
    let span = cfg.epochs - 1 - w;
    let p = if span == 0 { 0.0 } else { (epoch - w) as f64 / span as f64 };
    Ok(cfg.eta_min + (cfg.base_lr - cfg.eta_min) * (1.0 + (PI * p).cos()) / 2.0)
}
