//! Graph and hypergraph convolutions: contraction with a structural
//! operator followed by a learned channel projection.

use crate::error::{Error, Result};
use crate::numcore::params::impl_params;
use crate::numcore::{
    contract_axis, contract_axis_grad_input, contract_axis_grad_matrix, pointwise_channel_map,
    pointwise_channel_map_backward, Axis,
};
use crate::tensor::Tensor;

/// Channel projection `C_in → C_out` with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `C_in × C_out`
    pub weight: Tensor,
    pub bias: Tensor,
}
impl_params!(Projection { weight, bias });

impl Projection {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Projection {
            weight: Tensor::zeros(&[c_in, c_out]),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn identity(c: usize) -> Self {
        Projection {
            weight: Tensor::identity(c),
            bias: Tensor::zeros(&[c]),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        pointwise_channel_map(x, &self.weight, Some(&self.bias))
    }

    /// Returns `(dx, grads)`.
    pub fn backward(&self, x: &Tensor, grad: &Tensor) -> Result<(Tensor, Projection)> {
        let g = pointwise_channel_map_backward(x, &self.weight, grad)?;
        Ok((
            g.input,
            Projection {
                weight: g.weight,
                bias: g.bias,
            },
        ))
    }
}

/// Intermediate of a hypergraph convolution: the contracted input.
#[derive(Clone, Debug)]
pub struct HyperConvCache {
    contracted: Tensor,
}

#[derive(Clone, Debug)]
pub struct HyperConvGrads {
    pub input: Tensor,
    pub theta: Projection,
    /// Gradient with respect to the operator actually applied, when
    /// requested.
    pub operator: Option<Tensor>,
}

/// `X·M·Θ` where `M` is the operator contracted along `axis`.
pub fn hyper_conv_forward(x: &Tensor, op: &Tensor, theta: &Projection, axis: Axis) -> Result<(Tensor, HyperConvCache)> {
    let contracted = contract_axis(x, op, axis)?;
    let out = theta.apply(&contracted)?;
    Ok((out, HyperConvCache { contracted }))
}

pub fn hyper_conv_backward(
    x: &Tensor,
    op: &Tensor,
    theta: &Projection,
    axis: Axis,
    cache: &HyperConvCache,
    grad: &Tensor,
    want_operator: bool,
) -> Result<HyperConvGrads> {
    let (gz, dtheta) = theta.backward(&cache.contracted, grad)?;
    let input = contract_axis_grad_input(&gz, op, axis)?;
    let operator = if want_operator {
        Some(contract_axis_grad_matrix(x, &gz, axis)?)
    } else {
        None
    };
    Ok(HyperConvGrads {
        input,
        theta: dtheta,
        operator,
    })
}

/// Hypergraph convolution with a normalized operator `H̃`.
/// `symmetric` applies `H̃ + H̃ᵀ` (hyperedge-aware variant), otherwise
/// `H̃` alone.
pub fn hyper_conv(x: &Tensor, op: &Tensor, theta: &Projection, axis: Axis, symmetric: bool) -> Result<Tensor> {
    if symmetric {
        let sym = op.add(&op.transpose2()?)?;
        Ok(hyper_conv_forward(x, &sym, theta, axis)?.0)
    } else {
        Ok(hyper_conv_forward(x, op, theta, axis)?.0)
    }
}

/// Weights `M_k` of the partitioned skeleton graph convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphConvParams {
    pub weights: Vec<Tensor>,
    pub bias: Tensor,
}
impl_params!(GraphConvParams { weights, bias });

#[derive(Clone, Debug)]
pub struct GraphConvCache {
    contracted: Vec<Tensor>,
}

/// `Σ_k X·Ã_k·M_k + bias` over the adjacency partitions.
pub fn graph_conv(x: &Tensor, partitions: &[Tensor], p: &GraphConvParams) -> Result<(Tensor, GraphConvCache)> {
    if partitions.len() != p.weights.len() {
        return Err(Error::dim(format!(
            "{} partitions but {} weight matrices",
            partitions.len(),
            p.weights.len()
        )));
    }
    let (_, t, v) = x.dims3()?;
    let mut out = Tensor::zeros(&[p.bias.len(), t, v]);
    let plane = t * v;
    for (o, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        chunk.fill(p.bias.data()[o]);
    }
    let mut contracted = Vec::with_capacity(partitions.len());
    for (a, m) in partitions.iter().zip(&p.weights) {
        let z = contract_axis(x, a, Axis::Vertex)?;
        out.add_assign(&pointwise_channel_map(&z, m, None)?)?;
        contracted.push(z);
    }
    Ok((out, GraphConvCache { contracted }))
}

pub fn graph_conv_backward(
    partitions: &[Tensor],
    p: &GraphConvParams,
    cache: &GraphConvCache,
    grad: &Tensor,
) -> Result<(Tensor, GraphConvParams)> {
    let mut dx: Option<Tensor> = None;
    let mut weights = Vec::with_capacity(p.weights.len());
    let mut bias = None;
    for ((a, m), z) in partitions.iter().zip(&p.weights).zip(&cache.contracted) {
        let g = pointwise_channel_map_backward(z, m, grad)?;
        let d = contract_axis_grad_input(&g.input, a, Axis::Vertex)?;
        match dx.as_mut() {
            Some(acc) => acc.add_assign(&d)?,
            None => dx = Some(d),
        }
        weights.push(g.weight);
        bias.get_or_insert(g.bias);
    }
    let dx = dx.ok_or_else(|| Error::dim("graph convolution without partitions"))?;
    Ok((
        dx,
        GraphConvParams {
            weights,
            bias: bias.expect("at least one partition"),
        },
    ))
}
