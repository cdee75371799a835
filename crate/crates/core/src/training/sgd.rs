//! SGD with Nesterov momentum and weight decay folded into the gradient.

use crate::error::Result;
use crate::numcore::params::{grad_records, named_mut, zeros_like, Params};

use super::TrainConfig;

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug)]
pub struct Velocity<P>(pub P);

impl<P: Params + Clone> Velocity<P> {
    pub fn zeros(like: &P) -> Self {
        Velocity(zeros_like(like))
    }
}

/// `g ← g + wd·p` (decaying tensors only), `v ← m·v + g`,
/// `p ← p − lr·(g + m·v)`.
pub fn sgd_step<P: Params>(params: &mut P, grads: &P, lr: f64, cfg: &TrainConfig, velocity: &mut Velocity<P>) -> Result<()> {
    let records = grad_records(params, grads)?;
    let vel = named_mut(&mut velocity.0);
    if vel.len() != records.len() {
        return Err(crate::Error::dim("velocity tree does not match parameters"));
    }
    let m = cfg.momentum;
    for (rec, (_, v)) in records.into_iter().zip(vel) {
        rec.value.same_shape(v)?;
        let wd = if rec.decays() { cfg.weight_decay } else { 0.0 };
        let grad = rec.grad.data();
        let vd = v.data_mut();
        for ((p, &g0), vi) in rec.value.data_mut().iter_mut().zip(grad).zip(vd) {
            let g = g0 + wd * *p;
            *vi = m * *vi + g;
            *p -= lr * (g + m * *vi);
        }
    }
    Ok(())
}
