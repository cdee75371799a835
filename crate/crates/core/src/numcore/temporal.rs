//! Convolution and pooling along the time axis, applied independently
//! at every joint.

use crate::error::{Error, Result};
use crate::numcore::channel::ProjectionGrads;
use crate::tensor::{axpy, dot, Tensor};

/// Number of output frames for a stride-`s` layer with "same" padding.
pub fn strided_len(frames: usize, stride: usize) -> usize {
    frames.div_ceil(stride)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(kernel: usize, dilation: usize, stride: usize) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::input(format!("temporal kernel must be odd, got {kernel}")));
        }
        if dilation == 0 || stride == 0 {
            return Err(Error::input("dilation and stride must be positive"));
        }
        Ok(ConvGeometry {
            kernel,
            dilation,
            stride,
        })
    }

    fn pad(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }

    /// Source frame for output frame `to` and kernel tap `j`.
    #[inline]
    fn source(&self, to: usize, j: usize, frames: usize) -> Option<usize> {
        let s = (to * self.stride + j * self.dilation).checked_sub(self.pad())?;
        (s < frames).then_some(s)
    }
}

/// Zero-padded temporal convolution. `weight` is `C_out×C_in×k`.
pub fn temporal_conv(x: &Tensor, weight: &Tensor, bias: &Tensor, geom: ConvGeometry) -> Result<Tensor> {
    let (ci, t, v) = x.dims3()?;
    if t < 1 {
        return Err(Error::dim("temporal convolution needs at least one frame"));
    }
    let (co, wci, k) = conv_dims(weight)?;
    if wci != ci || k != geom.kernel || bias.len() != co {
        return Err(Error::dim(format!(
            "temporal conv weight {:?} does not fit input {:?}",
            weight.shape(),
            x.shape()
        )));
    }
    let tout = strided_len(t, geom.stride);
    let mut out = Tensor::zeros(&[co, tout, v]);
    let xd = x.data();
    let wd = weight.data();
    let od = out.data_mut();
    for o in 0..co {
        for to in 0..tout {
            let orow = &mut od[(o * tout + to) * v..(o * tout + to + 1) * v];
            orow.fill(bias.data()[o]);
            for j in 0..k {
                let Some(src) = geom.source(to, j, t) else { continue };
                for i in 0..ci {
                    let w = wd[(o * ci + i) * k + j];
                    axpy(w, &xd[(i * t + src) * v..(i * t + src + 1) * v], orow);
                }
            }
        }
    }
    Ok(out)
}

pub fn temporal_conv_backward(
    x: &Tensor,
    weight: &Tensor,
    grad: &Tensor,
    geom: ConvGeometry,
) -> Result<ProjectionGrads> {
    let (ci, t, v) = x.dims3()?;
    let (co, _, k) = conv_dims(weight)?;
    let tout = strided_len(t, geom.stride);
    if grad.shape() != [co, tout, v] {
        return Err(Error::dim("temporal conv backward shape mismatch"));
    }
    let xd = x.data();
    let wd = weight.data();
    let gd = grad.data();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[co]);
    for o in 0..co {
        for to in 0..tout {
            let grow = &gd[(o * tout + to) * v..(o * tout + to + 1) * v];
            db.data_mut()[o] += grow.iter().sum::<f64>();
            for j in 0..k {
                let Some(src) = geom.source(to, j, t) else { continue };
                for i in 0..ci {
                    let widx = (o * ci + i) * k + j;
                    let range = (i * t + src) * v..(i * t + src + 1) * v;
                    dw.data_mut()[widx] += dot(&xd[range.clone()], grow);
                    axpy(wd[widx], grow, &mut dx.data_mut()[range]);
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

fn conv_dims(weight: &Tensor) -> Result<(usize, usize, usize)> {
    match weight.shape() {
        &[co, ci, k] => Ok((co, ci, k)),
        s => Err(Error::dim(format!("temporal conv weight must be rank 3, got {s:?}"))),
    }
}

/// Max pooling over a centred window of `kernel` frames. Out-of-range
/// taps are ignored. Returns the pooled tensor and, for every output
/// element, the source frame that won (ties go to the earlier frame).
pub fn max_pool_time(x: &Tensor, kernel: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (c, t, v) = x.dims3()?;
    let geom = ConvGeometry::new(kernel, 1, stride)?;
    if t < 1 {
        return Err(Error::dim("max pool needs at least one frame"));
    }
    let tout = strided_len(t, stride);
    let mut out = Tensor::zeros(&[c, tout, v]);
    let mut argmax = vec![0usize; c * tout * v];
    let xd = x.data();
    for ch in 0..c {
        for to in 0..tout {
            for vv in 0..v {
                let mut best = f64::NEG_INFINITY;
                let mut best_t = 0;
                for j in 0..kernel {
                    if let Some(src) = geom.source(to, j, t) {
                        let val = xd[(ch * t + src) * v + vv];
                        if val > best {
                            best = val;
                            best_t = src;
                        }
                    }
                }
                let idx = (ch * tout + to) * v + vv;
                out.data_mut()[idx] = best;
                argmax[idx] = best_t;
            }
        }
    }
    Ok((out, argmax))
}

pub fn max_pool_time_backward(input_shape: &[usize], argmax: &[usize], grad: &Tensor) -> Result<Tensor> {
    let (c, tout, v) = grad.dims3()?;
    let t = input_shape[1];
    let mut dx = Tensor::zeros(input_shape);
    for ch in 0..c {
        for to in 0..tout {
            for vv in 0..v {
                let idx = (ch * tout + to) * v + vv;
                dx.data_mut()[(ch * t + argmax[idx]) * v + vv] += grad.data()[idx];
            }
        }
    }
    Ok(dx)
}

/// Keeps every `stride`-th frame, starting at frame 0.
pub fn subsample_time(x: &Tensor, stride: usize) -> Result<Tensor> {
    let (c, t, v) = x.dims3()?;
    if stride == 0 {
        return Err(Error::input("stride must be positive"));
    }
    if stride == 1 {
        return Ok(x.clone());
    }
    let tout = strided_len(t, stride);
    let mut out = Tensor::zeros(&[c, tout, v]);
    for ch in 0..c {
        for to in 0..tout {
            let src = (ch * t + to * stride) * v;
            let dst = (ch * tout + to) * v;
            out.data_mut()[dst..dst + v].copy_from_slice(&x.data()[src..src + v]);
        }
    }
    Ok(out)
}

pub fn subsample_time_backward(input_shape: &[usize], stride: usize, grad: &Tensor) -> Result<Tensor> {
    if stride == 1 {
        return Ok(grad.clone());
    }
    let (c, tout, v) = grad.dims3()?;
    let t = input_shape[1];
    let mut dx = Tensor::zeros(input_shape);
    for ch in 0..c {
        for to in 0..tout {
            let dst = (ch * t + to * stride) * v;
            let src = (ch * tout + to) * v;
            dx.data_mut()[dst..dst + v].copy_from_slice(&grad.data()[src..src + v]);
        }
    }
    Ok(dx)
}

/// Mean over the time and joint axes: `C×T×V → C`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, t, v) = x.dims3()?;
    let plane = t * v;
    if plane == 0 {
        return Err(Error::dim("cannot pool an empty plane"));
    }
    let data = x
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().sum::<f64>() / plane as f64)
        .collect();
    Tensor::new(&[c], data)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad: &Tensor) -> Result<Tensor> {
    let plane = input_shape[1] * input_shape[2];
    let mut dx = Tensor::zeros(input_shape);
    for (p, g) in dx.data_mut().chunks_exact_mut(plane).zip(grad.data()) {
        p.fill(g / plane as f64);
    }
    Ok(dx)
}
