//! Pointwise (1×1) channel projections and the dense head layer.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Tensor};

/// Gradients of a weight/bias projection.
#[derive(Clone, Debug)]
pub struct ProjectionGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// `out[c',t,v] = Σ_c x[c,t,v]·weight[c,c'] + bias[c']`.
///
/// `bias` may be omitted when a caller accumulates several projections
/// that share one bias.
pub fn pointwise_channel_map(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (c, t, v) = x.dims3()?;
    let (ci, co) = weight.dims2()?;
    if ci != c {
        return Err(Error::dim(format!(
            "channel map expects {ci} input channels, got {c}"
        )));
    }
    if let Some(b) = bias {
        if b.len() != co {
            return Err(Error::dim(format!("bias length {} != {co}", b.len())));
        }
    }
    let plane = t * v;
    let mut out = Tensor::zeros(&[co, t, v]);
    let xd = x.data();
    let wd = weight.data();
    let od = out.data_mut();
    for (o, oplane) in od.chunks_exact_mut(plane).enumerate() {
        if let Some(b) = bias {
            oplane.fill(b.data()[o]);
        }
        for (i, xplane) in xd.chunks_exact(plane).enumerate() {
            let w = wd[i * co + o];
            if w != 0.0 {
                axpy(w, xplane, oplane);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`pointwise_channel_map`]. The bias gradient is always
/// returned, even if the forward pass omitted the bias.
pub fn pointwise_channel_map_backward(
    x: &Tensor,
    weight: &Tensor,
    grad: &Tensor,
) -> Result<ProjectionGrads> {
    let (c, t, v) = x.dims3()?;
    let (ci, co) = weight.dims2()?;
    let (gc, gt, gv) = grad.dims3()?;
    if ci != c || gc != co || gt != t || gv != v {
        return Err(Error::dim("channel map backward shape mismatch"));
    }
    let plane = t * v;
    let xd = x.data();
    let gd = grad.data();
    let wd = weight.data();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[co]);
    {
        let dxd = dx.data_mut();
        let dwd = dw.data_mut();
        for (o, gplane) in gd.chunks_exact(plane).enumerate() {
            db.data_mut()[o] = gplane.iter().sum();
            for (i, xplane) in xd.chunks_exact(plane).enumerate() {
                dwd[i * co + o] = dot(xplane, gplane);
                let w = wd[i * co + o];
                if w != 0.0 {
                    axpy(w, gplane, &mut dxd[i * plane..(i + 1) * plane]);
                }
            }
        }
    }
    Ok(ProjectionGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Dense layer on a batch of row vectors: `x: B×n`, `weight: n×k`,
/// `bias: k`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, n) = x.dims2()?;
    let (wn, k) = weight.dims2()?;
    if wn != n || bias.len() != k {
        return Err(Error::dim(format!(
            "linear: input width {n}, weight {wn}×{k}, bias {}",
            bias.len()
        )));
    }
    let mut out = Tensor::zeros(&[b, k]);
    let xd = x.data();
    let wd = weight.data();
    for (r, orow) in out.data_mut().chunks_exact_mut(k).enumerate() {
        orow.copy_from_slice(bias.data());
        for p in 0..n {
            axpy(xd[r * n + p], &wd[p * k..(p + 1) * k], orow);
        }
    }
    Ok(out)
}

pub fn linear_backward(x: &Tensor, weight: &Tensor, grad: &Tensor) -> Result<ProjectionGrads> {
    let (b, n) = x.dims2()?;
    let (_, k) = weight.dims2()?;
    if grad.shape() != [b, k] {
        return Err(Error::dim("linear backward shape mismatch"));
    }
    let xd = x.data();
    let wd = weight.data();
    let gd = grad.data();
    let mut dx = Tensor::zeros(&[b, n]);
    let mut dw = Tensor::zeros(&[n, k]);
    let mut db = Tensor::zeros(&[k]);
    for r in 0..b {
        let grow = &gd[r * k..(r + 1) * k];
        axpy(1.0, grow, db.data_mut());
        for p in 0..n {
            dx.data_mut()[r * n + p] = dot(&wd[p * k..(p + 1) * k], grow);
            axpy(xd[r * n + p], grow, &mut dw.data_mut()[p * k..(p + 1) * k]);
        }
    }
    Ok(ProjectionGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
