//! Multi-scale temporal convolution with channel attention.

use crate::error::{Error, Result};
use crate::numcore::params::impl_params;
use crate::numcore::temporal::{
    global_avg_pool, global_avg_pool_backward, max_pool_time_backward, strided_len, subsample_time_backward,
    temporal_conv_backward,
};
use crate::numcore::{activate, activate_backward, linear, linear_backward, max_pool_time, subsample_time, temporal_conv, Activation, ConvGeometry};
use crate::tensor::Tensor;

use super::conv::Projection;

/// Temporal kernel of the two convolutional branches.
pub const TF_KERNEL: usize = 5;
/// Window of the pooling branch.
pub const TF_POOL: usize = 3;
/// Channel reduction of the branches and of the attention bottleneck.
pub const TF_REDUCTION: usize = 4;

/// Branch widths summing to `channels`; the remainder goes to the
/// leading branches.
pub fn branch_widths(channels: usize) -> [usize; 4] {
    let base = channels / TF_REDUCTION;
    let rem = channels % TF_REDUCTION;
    std::array::from_fn(|i| base + usize::from(i < rem))
}

pub fn attention_width(channels: usize) -> usize {
    (channels / TF_REDUCTION).max(1)
}

/// Temporal convolution weights, `C_out×C_in×k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
}
impl_params!(ConvParams { weight, bias });

#[derive(Clone, Debug, PartialEq)]
pub struct TfParams {
    /// One 1×1 reduction per branch.
    pub reduce: Vec<Projection>,
    pub conv_short: ConvParams,
    pub conv_dilated: ConvParams,
    /// Attention bottleneck, `C → C/4 → C`.
    pub squeeze: Projection,
    pub excite: Projection,
}
impl_params!(TfParams { reduce, conv_short, conv_dilated, squeeze, excite });

impl TfParams {
    pub fn zeros(channels: usize) -> Result<Self> {
        if channels < TF_REDUCTION {
            return Err(Error::Config(format!(
                "temporal fusion needs at least {TF_REDUCTION} channels, got {channels}"
            )));
        }
        let w = branch_widths(channels);
        let att = attention_width(channels);
        Ok(TfParams {
            reduce: w.iter().map(|&q| Projection::zeros(channels, q)).collect(),
            conv_short: ConvParams {
                weight: Tensor::zeros(&[w[0], w[0], TF_KERNEL]),
                bias: Tensor::zeros(&[w[0]]),
            },
            conv_dilated: ConvParams {
                weight: Tensor::zeros(&[w[1], w[1], TF_KERNEL]),
                bias: Tensor::zeros(&[w[1]]),
            },
            squeeze: Projection::zeros(channels, att),
            excite: Projection::zeros(att, channels),
        })
    }

    pub fn channels(&self) -> usize {
        self.squeeze.weight.shape()[0]
    }
}

#[derive(Clone, Debug)]
pub struct TfCache {
    reduced: Vec<Tensor>,
    activated: Vec<Tensor>,
    argmax: Vec<usize>,
    concat: Tensor,
    pooled: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    gate: Tensor,
    stride: usize,
}

impl TfCache {
    /// Per-channel attention gate, each entry in `(0, 1)`.
    pub fn gate(&self) -> &Tensor {
        &self.gate
    }
}

fn geometries(stride: usize) -> Result<(ConvGeometry, ConvGeometry)> {
    Ok((
        ConvGeometry::new(TF_KERNEL, 1, stride)?,
        ConvGeometry::new(TF_KERNEL, 2, stride)?,
    ))
}

fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let (_, t, v) = parts[0].dims3()?;
    let mut c = 0;
    let mut data = Vec::new();
    for p in parts {
        let (pc, pt, pv) = p.dims3()?;
        if (pt, pv) != (t, v) {
            return Err(Error::dim("branch outputs differ in extent"));
        }
        c += pc;
        data.extend_from_slice(p.data());
    }
    Tensor::new(&[c, t, v], data)
}

fn split_channels(x: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let (_, t, v) = x.dims3()?;
    let plane = t * v;
    let mut out = Vec::with_capacity(widths.len());
    let mut start = 0;
    for &w in widths {
        out.push(Tensor::new(&[w, t, v], x.data()[start * plane..(start + w) * plane].to_vec())?);
        start += w;
    }
    Ok(out)
}

/// `C×T×V → C×ceil(T/stride)×V`.
pub fn ms_temporal_tf(x: &Tensor, p: &TfParams, stride: usize) -> Result<(Tensor, TfCache)> {
    let (c, t, _) = x.dims3()?;
    if c != p.channels() {
        return Err(Error::dim(format!("temporal fusion over {} channels, input has {c}", p.channels())));
    }
    if stride == 0 || t < stride {
        return Err(Error::dim(format!("{t} frames cannot be strided by {stride}")));
    }
    let (g_short, g_dil) = geometries(stride)?;
    let reduced = p.reduce.iter().map(|r| r.apply(x)).collect::<Result<Vec<_>>>()?;
    let activated: Vec<Tensor> = reduced[..3].iter().map(|r| activate(r, Activation::Relu)).collect();
    let a = temporal_conv(&activated[0], &p.conv_short.weight, &p.conv_short.bias, g_short)?;
    let b = temporal_conv(&activated[1], &p.conv_dilated.weight, &p.conv_dilated.bias, g_dil)?;
    let (cpool, argmax) = max_pool_time(&activated[2], TF_POOL, stride)?;
    let d = subsample_time(&reduced[3], stride)?;
    let concat = concat_channels(&[&a, &b, &cpool, &d])?;

    let pooled = global_avg_pool(&concat)?.reshape(&[1, c])?;
    let hidden_pre = linear(&pooled, &p.squeeze.weight, &p.squeeze.bias)?;
    let hidden = activate(&hidden_pre, Activation::Relu);
    let gate = activate(&linear(&hidden, &p.excite.weight, &p.excite.bias)?, Activation::Sigmoid);

    let (_, tout, v) = concat.dims3()?;
    debug_assert_eq!(tout, strided_len(t, stride));
    let mut out = concat.clone();
    for (plane, g) in out.data_mut().chunks_exact_mut(tout * v).zip(gate.data()) {
        plane.iter_mut().for_each(|z| *z *= g);
    }
    Ok((
        out,
        TfCache {
            reduced,
            activated,
            argmax,
            concat,
            pooled,
            hidden_pre,
            hidden,
            gate,
            stride,
        },
    ))
}

pub fn ms_temporal_tf_backward(x: &Tensor, p: &TfParams, cache: &TfCache, grad: &Tensor) -> Result<(Tensor, TfParams)> {
    let (c, tout, v) = cache.concat.dims3()?;
    if grad.shape() != cache.concat.shape() {
        return Err(Error::dim("temporal fusion gradient shape mismatch"));
    }
    let plane = tout * v;
    // out = concat ⊙ gate
    let mut dconcat = grad.clone();
    let mut dgate = Tensor::zeros(&[1, c]);
    for (ch, (gp, zp)) in dconcat
        .data_mut()
        .chunks_exact_mut(plane)
        .zip(cache.concat.data().chunks_exact(plane))
        .enumerate()
    {
        dgate.data_mut()[ch] = crate::tensor::dot(gp, zp);
        let g = cache.gate.data()[ch];
        gp.iter_mut().for_each(|z| *z *= g);
    }
    let dlogit = activate_backward(&cache.gate, &cache.gate, &dgate, Activation::Sigmoid);
    let ex = linear_backward(&cache.hidden, &p.excite.weight, &dlogit)?;
    let dh = activate_backward(&cache.hidden_pre, &cache.hidden, &ex.input, Activation::Relu);
    let sq = linear_backward(&cache.pooled, &p.squeeze.weight, &dh)?;
    let dpool = global_avg_pool_backward(cache.concat.shape(), &sq.input.reshape(&[c])?)?;
    dconcat.add_assign(&dpool)?;

    let widths: Vec<usize> = p.reduce.iter().map(|r| r.bias.len()).collect();
    let parts = split_channels(&dconcat, &widths)?;
    let (g_short, g_dil) = geometries(cache.stride)?;
    let ga = temporal_conv_backward(&cache.activated[0], &p.conv_short.weight, &parts[0], g_short)?;
    let gb = temporal_conv_backward(&cache.activated[1], &p.conv_dilated.weight, &parts[1], g_dil)?;
    let gc = max_pool_time_backward(cache.activated[2].shape(), &cache.argmax, &parts[2])?;
    let gd = subsample_time_backward(cache.reduced[3].shape(), cache.stride, &parts[3])?;
    let branch_grads = [ga.input, gb.input, gc];
    let mut dreduced: Vec<Tensor> = branch_grads
        .iter()
        .zip(&cache.reduced)
        .zip(&cache.activated)
        .map(|((g, r), a)| activate_backward(r, a, g, Activation::Relu))
        .collect();
    dreduced.push(gd);

    let mut dx = x.zeros_like();
    let mut reduce = Vec::with_capacity(4);
    for (r, g) in p.reduce.iter().zip(&dreduced) {
        let (d, pg) = r.backward(x, g)?;
        dx.add_assign(&d)?;
        reduce.push(pg);
    }
    Ok((
        dx,
        TfParams {
            reduce,
            conv_short: ConvParams {
                weight: ga.weight,
                bias: ga.bias,
            },
            conv_dilated: ConvParams {
                weight: gb.weight,
                bias: gb.bias,
            },
            squeeze: Projection {
                weight: sq.weight,
                bias: sq.bias,
            },
            excite: Projection {
                weight: ex.weight,
                bias: ex.bias,
            },
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{grad_check, random_tensor};
    use crate::numcore::params::{named, named_mut};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, c: usize) -> TfParams {
        let mut p = TfParams::zeros(c).unwrap();
        for (_, t) in named_mut(&mut p) {
            *t = random_tensor(rng, t.shape()).scale(0.5);
        }
        p
    }

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let p = random_params(&mut rng, 8);
        let x = random_tensor(&mut rng, &[8, 7, 3]);
        assert_eq!(ms_temporal_tf(&x, &p, 1).unwrap().0.shape(), &[8, 7, 3]);
        let x = random_tensor(&mut rng, &[8, 20, 3]);
        assert_eq!(ms_temporal_tf(&x, &p, 2).unwrap().0.shape(), &[8, 10, 3]);
        let x = random_tensor(&mut rng, &[8, 1, 3]);
        assert!(matches!(ms_temporal_tf(&x, &p, 2), Err(Error::Dimension(_))));
        assert_eq!(branch_widths(10), [3, 3, 2, 2]);
        assert!(TfParams::zeros(3).is_err());
    }

    #[test]
    fn constant_input_is_gated_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let c = 4;
        let mut p = TfParams::zeros(c).unwrap();
        for (i, r) in p.reduce.iter_mut().enumerate() {
            r.weight.set2(i, 0, 1.0);
        }
        // centre tap only, so zero padding never reaches the output
        p.conv_short.weight.data_mut()[TF_KERNEL / 2] = 1.0;
        p.conv_dilated.weight.data_mut()[TF_KERNEL / 2] = 1.0;
        p.squeeze = Projection {
            weight: random_tensor(&mut rng, &[c, 1]),
            bias: random_tensor(&mut rng, &[1]),
        };
        p.excite = Projection {
            weight: random_tensor(&mut rng, &[1, c]),
            bias: random_tensor(&mut rng, &[c]),
        };
        let x = Tensor::full(&[c, 6, 3], 0.7);
        let (y, cache) = ms_temporal_tf(&x, &p, 1).unwrap();
        for ch in 0..c {
            let g = cache.gate().data()[ch];
            assert!(g > 0.0 && g < 1.0);
            for t in 0..6 {
                for v in 0..3 {
                    assert!((y.at3(ch, t, v) - 0.7 * g).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for &(c, t, v, s) in &[(4, 5, 2, 1), (4, 6, 3, 2), (5, 7, 2, 2), (8, 4, 3, 1), (6, 9, 2, 2)] {
            let p = random_params(&mut rng, c);
            let x = random_tensor(&mut rng, &[c, t, v]);
            let (y, cache) = ms_temporal_tf(&x, &p, s).unwrap();
            let r = random_tensor(&mut rng, y.shape());
            let (dx, g) = ms_temporal_tf_backward(&x, &p, &cache, &r).unwrap();
            let mut inputs = vec![x];
            inputs.extend(named(&p).into_iter().map(|(_, t)| t.clone()));
            let mut analytic = vec![dx];
            analytic.extend(named(&g).into_iter().map(|(_, t)| t.clone()));
            let rep = grad_check(&inputs, &analytic, |q| {
                let mut pp = p.clone();
                for ((_, dst), src) in named_mut(&mut pp).into_iter().zip(&q[1..]) {
                    *dst = src.clone();
                }
                Ok(ms_temporal_tf(&q[0], &pp, s)?.0.dot(&r))
            })
            .unwrap();
            assert!(rep.max_rel_error < 1e-4, "{c} {t} {v} {s}: {rep:?}");
        }
    }
}
