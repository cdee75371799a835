//! Optimization, learning-rate schedule, input streams and score fusion.

pub mod checkpoint;
pub mod schedule;
pub mod sgd;
pub mod streams;
pub mod trainer;

pub use checkpoint::{model_from_archive, model_to_archive};
pub use schedule::lr_at;
pub use sgd::{sgd_step, Velocity};
pub use streams::{derive_stream, derive_streams, dual_correlation_channels, fuse_scores, prepare_dataset, StreamKind, StreamWeights};
pub use trainer::{accuracy, evaluate, metrics_csv, train_loop, EpochRecord, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    /// Nesterov momentum coefficient.
    pub momentum: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub eta_min: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.1,
            weight_decay: 4e-4,
            momentum: 0.9,
            epochs: 90,
            warmup_epochs: 5,
            eta_min: 1e-4,
            batch_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.warmup_epochs >= self.epochs {
            return bad(format!("warmup_epochs {} must be below epochs {}", self.warmup_epochs, self.epochs));
        }
        if !(self.eta_min >= 0.0 && self.base_lr > self.eta_min && self.base_lr.is_finite()) {
            return bad(format!("need base_lr {} > eta_min {} >= 0", self.base_lr, self.eta_min));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        Ok(())
    }
}
