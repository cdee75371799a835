//! Signed joint↔frame incidence built from the spatial and time-point
//! hypergraphs through learned projections and `tanh`.

use crate::error::{Error, Result};
use crate::numcore::params::impl_params;
use crate::tensor::Tensor;

/// Learned projections for the two cross hypergraphs.
///
/// `H_ST = tanh(H_N·mu_st − phi_st·H_T)` is `V×T`;
/// `H_TS = tanh(H_T·mu_ts − phi_ts·H_Nᵀ)` is `T×V`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossProjections {
    /// `E_n × T`
    pub mu_st: Tensor,
    /// `V × T`
    pub phi_st: Tensor,
    /// `T × V`
    pub mu_ts: Tensor,
    /// `T × E_n`
    pub phi_ts: Tensor,
}
impl_params!(CrossProjections { mu_st, phi_st, mu_ts, phi_ts });

impl CrossProjections {
    pub fn zeros(joints: usize, edges: usize, frames: usize) -> Self {
        CrossProjections {
            mu_st: Tensor::zeros(&[edges, frames]),
            phi_st: Tensor::zeros(&[joints, frames]),
            mu_ts: Tensor::zeros(&[frames, joints]),
            phi_ts: Tensor::zeros(&[frames, edges]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CrossHypergraphs {
    pub st: Tensor,
    pub ts: Tensor,
}

/// `tanh` kept strictly inside `(-1, 1)`; saturated values are pulled
/// in by one ulp.
fn open_tanh(x: f64) -> f64 {
    const LIMIT: f64 = 1.0 - f64::EPSILON / 2.0;
    x.tanh().clamp(-LIMIT, LIMIT)
}

fn check(h_n: &Tensor, h_t: &Tensor, p: &CrossProjections) -> Result<()> {
    let (v, e) = h_n.dims2()?;
    let (t, t2) = h_t.dims2()?;
    if t != t2 {
        return Err(Error::dim("time-point incidence must be square"));
    }
    let want = [
        ("mu_st", &p.mu_st, [e, t]),
        ("phi_st", &p.phi_st, [v, t]),
        ("mu_ts", &p.mu_ts, [t, v]),
        ("phi_ts", &p.phi_ts, [t, e]),
    ];
    for (name, m, shape) in want {
        if m.shape() != shape {
            return Err(Error::dim(format!("{name} is {:?}, expected {shape:?}", m.shape())));
        }
    }
    Ok(())
}

pub fn cross_hypergraphs(h_n: &Tensor, h_t: &Tensor, p: &CrossProjections) -> Result<CrossHypergraphs> {
    check(h_n, h_t, p)?;
    let st = h_n.matmul(&p.mu_st)?.sub(&p.phi_st.matmul(h_t)?)?.map(open_tanh);
    let ts = h_t
        .matmul(&p.mu_ts)?
        .sub(&p.phi_ts.matmul(&h_n.transpose2()?)?)?
        .map(open_tanh);
    Ok(CrossHypergraphs { st, ts })
}

/// Projection gradients given gradients on both outputs.
pub fn cross_hypergraphs_backward(
    h_n: &Tensor,
    h_t: &Tensor,
    out: &CrossHypergraphs,
    d_st: &Tensor,
    d_ts: &Tensor,
) -> Result<CrossProjections> {
    out.st.same_shape(d_st)?;
    out.ts.same_shape(d_ts)?;
    let tanh_grad = |y: &Tensor, g: &Tensor| {
        let mut d = g.clone();
        for (a, &b) in d.data_mut().iter_mut().zip(y.data()) {
            *a *= 1.0 - b * b;
        }
        d
    };
    let pre_st = tanh_grad(&out.st, d_st);
    let pre_ts = tanh_grad(&out.ts, d_ts);
    Ok(CrossProjections {
        mu_st: h_n.transpose2()?.matmul(&pre_st)?,
        phi_st: pre_st.matmul(&h_t.transpose2()?)?.scale(-1.0),
        mu_ts: h_t.transpose2()?.matmul(&pre_ts)?,
        phi_ts: pre_ts.matmul(h_n)?.scale(-1.0),
    })
}
