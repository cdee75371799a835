//! Per-channel batch normalization over `(batch, T, V)`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros(&[channels]),
            var: Tensor::full(&[channels], 1.0),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    x_hat: Vec<Tensor>,
    inv_std: Vec<f64>,
    mode: Mode,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Vec<Tensor>,
    pub gamma: Tensor,
    pub shift: Tensor,
}

/// Normalizes every channel of a batch of `C×T×V` tensors. In train
/// mode the batch statistics are used and the updated running
/// statistics are returned; eval mode reads the running statistics.
pub fn batch_norm(
    xs: &[Tensor],
    gamma: &Tensor,
    shift: &Tensor,
    stats: &RunningStats,
    mode: Mode,
) -> Result<(Vec<Tensor>, BatchNormCache, Option<RunningStats>)> {
    let first = xs.first().ok_or_else(|| Error::dim("batch norm over an empty batch"))?;
    let (c, t, v) = first.dims3()?;
    if xs.iter().any(|x| x.shape() != first.shape()) {
        return Err(Error::dim("batch norm inputs differ in shape"));
    }
    if gamma.len() != c || shift.len() != c || stats.channels() != c {
        return Err(Error::dim(format!("batch norm over {c} channels: parameter length mismatch")));
    }
    let plane = t * v;
    let count = (xs.len() * plane) as f64;
    if plane == 0 {
        return Err(Error::dim("batch norm over empty planes"));
    }
    let (mean, var, updated) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for x in xs {
                for (ch, p) in x.data().chunks_exact(plane).enumerate() {
                    mean[ch] += p.iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            for x in xs {
                for (ch, p) in x.data().chunks_exact(plane).enumerate() {
                    var[ch] += p.iter().map(|a| (a - mean[ch]).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|s| *s /= count);
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let new = RunningStats {
                mean: Tensor::new(
                    &[c],
                    (0..c)
                        .map(|i| (1.0 - BN_MOMENTUM) * stats.mean.data()[i] + BN_MOMENTUM * mean[i])
                        .collect(),
                )?,
                var: Tensor::new(
                    &[c],
                    (0..c)
                        .map(|i| (1.0 - BN_MOMENTUM) * stats.var.data()[i] + BN_MOMENTUM * var[i] * unbias)
                        .collect(),
                )?,
            };
            (mean, var, Some(new))
        }
        Mode::Eval => (stats.mean.data().to_vec(), stats.var.data().to_vec(), None),
    };
    let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s + BN_EPS).sqrt()).collect();
    let mut outs = Vec::with_capacity(xs.len());
    let mut x_hat = Vec::with_capacity(xs.len());
    for x in xs {
        let mut xh = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        for ch in 0..c {
            let src = &x.data()[ch * plane..(ch + 1) * plane];
            let (g, b) = (gamma.data()[ch], shift.data()[ch]);
            let hat = &mut xh.data_mut()[ch * plane..(ch + 1) * plane];
            for (h, a) in hat.iter_mut().zip(src) {
                *h = (a - mean[ch]) * inv_std[ch];
            }
            for (o, h) in y.data_mut()[ch * plane..(ch + 1) * plane].iter_mut().zip(hat.iter()) {
                *o = g * h + b;
            }
        }
        outs.push(y);
        x_hat.push(xh);
    }
    Ok((outs, BatchNormCache { x_hat, inv_std, mode }, updated))
}

pub fn batch_norm_backward(cache: &BatchNormCache, gamma: &Tensor, grads: &[Tensor]) -> Result<BatchNormGrads> {
    if grads.len() != cache.x_hat.len() {
        return Err(Error::dim("batch norm backward batch size mismatch"));
    }
    let (c, t, v) = cache.x_hat[0].dims3()?;
    let plane = t * v;
    let count = (grads.len() * plane) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dshift = vec![0.0; c];
    for (g, xh) in grads.iter().zip(&cache.x_hat) {
        g.same_shape(xh)?;
        for ch in 0..c {
            let gp = &g.data()[ch * plane..(ch + 1) * plane];
            let hp = &xh.data()[ch * plane..(ch + 1) * plane];
            dshift[ch] += gp.iter().sum::<f64>();
            dgamma[ch] += gp.iter().zip(hp).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let mut dx = Vec::with_capacity(grads.len());
    for (g, xh) in grads.iter().zip(&cache.x_hat) {
        let mut d = Tensor::zeros(g.shape());
        for ch in 0..c {
            let gp = &g.data()[ch * plane..(ch + 1) * plane];
            let hp = &xh.data()[ch * plane..(ch + 1) * plane];
            let k = gamma.data()[ch] * cache.inv_std[ch];
            let dp = &mut d.data_mut()[ch * plane..(ch + 1) * plane];
            match cache.mode {
                Mode::Train => {
                    // dx = γ/σ · (g − mean(g) − x̂·mean(g·x̂))
                    let mg = dshift[ch] / count;
                    let mgh = dgamma[ch] / count;
                    for ((o, a), h) in dp.iter_mut().zip(gp).zip(hp) {
                        *o = k * (a - mg - h * mgh);
                    }
                }
                Mode::Eval => {
                    for (o, a) in dp.iter_mut().zip(gp) {
                        *o = k * a;
                    }
                }
            }
        }
        dx.push(d);
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: Tensor::new(&[c], dgamma)?,
        shift: Tensor::new(&[c], dshift)?,
    })
}
