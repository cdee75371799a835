//! One spatial-temporal hypergraph block: bundle construction for three
//! spatial topologies, fusion, temporal fusion, residual, batch norm.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypergraph::{
    cross_hypergraphs, cross_hypergraphs_backward, normalize, normalize_matrix, normalize_matrix_backward, reduced_channels,
    tph_knn, CrossHypergraphs, CrossProjections,
};
use crate::numcore::params::{accumulate, impl_params, zeros_like};
use crate::numcore::temporal::{strided_len, subsample_time_backward};
use crate::numcore::{
    activate, batch_norm, batch_norm_backward, pointwise_channel_map_backward, subsample_time, Activation, Axis,
    BatchNormCache, Mode, RunningStats,
};
use crate::tensor::Tensor;

use super::conv::{
    graph_conv, graph_conv_backward, hyper_conv_backward, hyper_conv_forward, GraphConvCache, GraphConvParams,
    HyperConvCache, Projection,
};
use super::hif::{hif_concat, hif_concat_backward, mix_sum, FeatureBundle, BETA_INIT};
use super::tf::{ms_temporal_tf, ms_temporal_tf_backward, TfCache, TfParams, TF_REDUCTION};
use super::topology::{permute_cols, permute_rows, Topology};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockConfig {
    pub c_in: usize,
    pub c_out: usize,
    /// Temporal stride, 1 or 2.
    pub stride: usize,
    /// Frames entering the block.
    pub frames: usize,
    /// Neighbours per time-point hyperedge, the frame itself included.
    pub k_temporal: usize,
    pub residual: bool,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::Config("block channel counts must be positive".into()));
        }
        if self.c_out < TF_REDUCTION {
            return Err(Error::Config(format!("block output needs at least {TF_REDUCTION} channels")));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::Config(format!("stride {} is not 1 or 2", self.stride)));
        }
        if self.frames < self.stride {
            return Err(Error::Config(format!("{} frames cannot be strided by {}", self.frames, self.stride)));
        }
        if self.k_temporal < 1 || self.k_temporal > self.frames {
            return Err(Error::Config(format!(
                "temporal k = {} must lie in [1, {}]",
                self.k_temporal, self.frames
            )));
        }
        Ok(())
    }

    pub fn frames_out(&self) -> usize {
        strided_len(self.frames, self.stride)
    }

    /// Whether the residual path needs a projection.
    pub fn projects_residual(&self) -> bool {
        self.residual && (self.c_in != self.c_out || self.stride != 1)
    }
}

/// Batch-norm affine terms.
#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub gamma: Tensor,
    pub shift: Tensor,
}
impl_params!(NormParams { gamma, shift });

impl NormParams {
    pub fn new(channels: usize) -> Self {
        NormParams {
            gamma: Tensor::full(&[channels], 1.0),
            shift: Tensor::zeros(&[channels]),
        }
    }
}

/// Weights used with one spatial topology.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologyParams {
    pub theta_a: Projection,
    pub theta_d: Projection,
    pub theta_e: Projection,
    pub cross: CrossProjections,
    /// Fusion divisor, shape `[1]`.
    pub beta: Tensor,
}
impl_params!(TopologyParams { theta_a, theta_d, theta_e, cross, beta });

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    /// Channel reducer for the time-point hypergraph. It only steers a
    /// discrete neighbour search and receives no gradient.
    pub reducer: Projection,
    pub theta_b: Projection,
    pub graph: GraphConvParams,
    pub topologies: Vec<TopologyParams>,
    pub mixer: Projection,
    pub tf: TfParams,
    pub residual: Option<Projection>,
    pub bn: NormParams,
}
impl_params!(BlockParams { reducer, theta_b, graph, topologies, mixer, tf, residual, bn });

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.gen_range(-bound..bound);
    }
    t
}

fn projection<R: Rng + ?Sized>(rng: &mut R, c_in: usize, c_out: usize) -> Projection {
    Projection {
        weight: uniform(rng, &[c_in, c_out], c_in),
        bias: Tensor::zeros(&[c_out]),
    }
}

impl BlockParams {
    /// All-zero weights with unit batch-norm scale and `β = BETA_INIT`.
    pub fn zeros(cfg: &BlockConfig, topo: &Topology) -> Result<Self> {
        cfg.validate()?;
        let (ci, co, t, v) = (cfg.c_in, cfg.c_out, cfg.frames, topo.joints());
        Ok(BlockParams {
            reducer: Projection::zeros(ci, reduced_channels(ci)),
            theta_b: Projection::zeros(ci, co),
            graph: GraphConvParams {
                weights: vec![Tensor::zeros(&[ci, co]); topo.partitions.len()],
                bias: Tensor::zeros(&[co]),
            },
            topologies: topo
                .spatial
                .iter()
                .map(|s| TopologyParams {
                    theta_a: Projection::zeros(ci, co),
                    theta_d: Projection::zeros(ci, co),
                    theta_e: Projection::zeros(ci, co),
                    cross: CrossProjections::zeros(v, s.edges(), t),
                    beta: Tensor::scalar(BETA_INIT),
                })
                .collect(),
            mixer: Projection::zeros(3 * co, co),
            tf: TfParams::zeros(co)?,
            residual: cfg.projects_residual().then(|| Projection::zeros(ci, co)),
            bn: NormParams::new(co),
        })
    }

    /// Uniform `±1/√fan_in` weights, zero biases.
    pub fn init<R: Rng + ?Sized>(cfg: &BlockConfig, topo: &Topology, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(cfg, topo)?;
        let (ci, co, t) = (cfg.c_in, cfg.c_out, cfg.frames);
        p.reducer = projection(rng, ci, reduced_channels(ci));
        p.theta_b = projection(rng, ci, co);
        for w in &mut p.graph.weights {
            *w = uniform(rng, &[ci, co], ci);
        }
        for (tp, s) in p.topologies.iter_mut().zip(&topo.spatial) {
            let e = s.edges();
            let v = s.incidence.shape()[0];
            tp.theta_a = projection(rng, ci, co);
            tp.theta_d = projection(rng, ci, co);
            tp.theta_e = projection(rng, ci, co);
            tp.cross = CrossProjections {
                mu_st: uniform(rng, &[e, t], e),
                phi_st: uniform(rng, &[v, t], t),
                mu_ts: uniform(rng, &[t, v], t),
                phi_ts: uniform(rng, &[t, e], e),
            };
        }
        p.mixer = projection(rng, 3 * co, co);
        let tf = &mut p.tf;
        for r in &mut tf.reduce {
            *r = projection(rng, co, r.bias.len());
        }
        for conv in [&mut tf.conv_short, &mut tf.conv_dilated] {
            let s = conv.weight.shape().to_vec();
            conv.weight = uniform(rng, &s, s[1] * s[2]);
        }
        tf.squeeze = projection(rng, co, tf.squeeze.bias.len());
        tf.excite = projection(rng, tf.squeeze.bias.len(), co);
        if let Some(r) = &mut p.residual {
            *r = projection(rng, ci, co);
        }
        Ok(p)
    }

    /// Parameters of the same block after relabelling joint `j` as
    /// `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut p = self.clone();
        for tp in &mut p.topologies {
            tp.cross.phi_st = permute_rows(&tp.cross.phi_st, perm);
            tp.cross.mu_ts = permute_cols(&tp.cross.mu_ts, perm);
        }
        p
    }
}

/// Per-topology intermediates of one sample.
#[derive(Clone, Debug)]
pub struct TopologyCache {
    a_cache: HyperConvCache,
    pub a: Tensor,
    pub cross: CrossHypergraphs,
    st_op: Tensor,
    ts_op: Tensor,
    d_cache: HyperConvCache,
    pub d: Tensor,
    e_cache: HyperConvCache,
    pub e: Tensor,
}

/// Intermediates of one sample through one block.
#[derive(Clone, Debug)]
pub struct SampleCache {
    /// Binary time-point incidence `T×T`.
    pub tph: Tensor,
    tph_op: Tensor,
    b_cache: HyperConvCache,
    pub b: Tensor,
    c_cache: GraphConvCache,
    pub c: Tensor,
    pub topologies: Vec<TopologyCache>,
    cat_sum: Tensor,
    /// Summed fused features entering the temporal fusion.
    pub fused: Tensor,
    tf_cache: TfCache,
    pub temporal: Tensor,
    residual_input: Option<Tensor>,
}

impl SampleCache {
    /// `A′..E′` built with spatial topology `j`.
    pub fn bundle(&self, j: usize) -> FeatureBundle {
        let t = &self.topologies[j];
        FeatureBundle {
            a: t.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: t.d.clone(),
            e: t.e.clone(),
        }
    }

    /// Fused output for topology `j` alone.
    pub fn fused_for(&self, j: usize, p: &BlockParams) -> Result<Tensor> {
        let cat = hif_concat(&self.bundle(j), &p.topologies[j].beta)?;
        p.mixer.apply(&cat)
    }
}

fn check_input(cfg: &BlockConfig, topo: &Topology, x: &Tensor) -> Result<()> {
    let (c, t, v) = x.dims3()?;
    if (c, t, v) != (cfg.c_in, cfg.frames, topo.joints()) {
        return Err(Error::dim(format!(
            "block expects {}×{}×{}, got {c}×{t}×{v}",
            cfg.c_in,
            cfg.frames,
            topo.joints()
        )));
    }
    Ok(())
}

/// Everything before batch norm for a single sample.
pub fn sample_forward(p: &BlockParams, cfg: &BlockConfig, topo: &Topology, x: &Tensor) -> Result<(Tensor, SampleCache)> {
    check_input(cfg, topo, x)?;
    let tph_inc = tph_knn(x, cfg.k_temporal, &p.reducer.weight, &p.reducer.bias)?;
    let tph = tph_inc.matrix().clone();
    let tph_op = normalize(&tph_inc)?.symmetrized();
    let (b, b_cache) = hyper_conv_forward(x, &tph_op, &p.theta_b, Axis::Time)?;
    let (c, c_cache) = graph_conv(x, &topo.partitions, &p.graph)?;

    let (_, t, v) = x.dims3()?;
    let mut cat_sum = Tensor::zeros(&[3 * cfg.c_out, t, v]);
    let mut topologies = Vec::with_capacity(topo.spatial.len());
    for (s, tp) in topo.spatial.iter().zip(&p.topologies) {
        let (a, a_cache) = hyper_conv_forward(x, &s.operator, &tp.theta_a, Axis::Vertex)?;
        let cross = cross_hypergraphs(&s.incidence, &tph, &tp.cross)?;
        let st_op = normalize_matrix(&cross.st, &vec![1.0; t])?;
        let ts_op = normalize_matrix(&cross.ts, &vec![1.0; v])?;
        let (d, d_cache) = hyper_conv_forward(x, &st_op, &tp.theta_d, Axis::Vertex)?;
        let (e, e_cache) = hyper_conv_forward(x, &ts_op, &tp.theta_e, Axis::Time)?;
        let bundle = FeatureBundle {
            a,
            b: b.clone(),
            c: c.clone(),
            d,
            e,
        };
        cat_sum.add_assign(&hif_concat(&bundle, &tp.beta)?)?;
        topologies.push(TopologyCache {
            a_cache,
            a: bundle.a,
            cross,
            st_op,
            ts_op,
            d_cache,
            d: bundle.d,
            e_cache,
            e: bundle.e,
        });
    }
    let fused = mix_sum(&cat_sum, &p.mixer, topo.spatial.len())?;
    let (temporal, tf_cache) = ms_temporal_tf(&fused, &p.tf, cfg.stride)?;

    let mut out = temporal.clone();
    let residual_input = match (&p.residual, cfg.residual) {
        (Some(proj), _) => {
            let sub = subsample_time(x, cfg.stride)?;
            out.add_assign(&proj.apply(&sub)?)?;
            Some(sub)
        }
        (None, true) => {
            out.add_assign(x)?;
            None
        }
        (None, false) => None,
    };
    out.check_finite("block output")?;
    Ok((
        out,
        SampleCache {
            tph,
            tph_op,
            b_cache,
            b,
            c_cache,
            c,
            topologies,
            cat_sum,
            fused,
            tf_cache,
            temporal,
            residual_input,
        },
    ))
}

/// Adjoint of [`sample_forward`].
pub fn sample_backward(
    p: &BlockParams,
    cfg: &BlockConfig,
    topo: &Topology,
    x: &Tensor,
    cache: &SampleCache,
    grad: &Tensor,
) -> Result<(Tensor, BlockParams)> {
    let mut g = zeros_like(p);
    let (dfused, dtf) = ms_temporal_tf_backward(&cache.fused, &p.tf, &cache.tf_cache, grad)?;
    g.tf = dtf;
    let mix = pointwise_channel_map_backward(&cache.cat_sum, &p.mixer.weight, &dfused)?;
    g.mixer = Projection {
        weight: mix.weight,
        bias: mix.bias.scale(topo.spatial.len() as f64),
    };
    let dcat = mix.input;

    let (_, t, v) = x.dims3()?;
    let mut dx = x.zeros_like();
    let mut db = cache.b.zeros_like();
    let mut dc = cache.c.zeros_like();
    for (j, ((s, tp), tc)) in topo.spatial.iter().zip(&p.topologies).zip(&cache.topologies).enumerate() {
        let (dbundle, dbeta) = hif_concat_backward(&cache.bundle(j), &tp.beta, &dcat)?;
        db.add_assign(&dbundle.b)?;
        dc.add_assign(&dbundle.c)?;
        let ga = hyper_conv_backward(x, &s.operator, &tp.theta_a, Axis::Vertex, &tc.a_cache, &dbundle.a, false)?;
        let gd = hyper_conv_backward(x, &tc.st_op, &tp.theta_d, Axis::Vertex, &tc.d_cache, &dbundle.d, true)?;
        let ge = hyper_conv_backward(x, &tc.ts_op, &tp.theta_e, Axis::Time, &tc.e_cache, &dbundle.e, true)?;
        dx.add_assign(&ga.input)?;
        dx.add_assign(&gd.input)?;
        dx.add_assign(&ge.input)?;
        let d_st = normalize_matrix_backward(&tc.cross.st, &vec![1.0; t], gd.operator.as_ref().expect("requested"))?;
        let d_ts = normalize_matrix_backward(&tc.cross.ts, &vec![1.0; v], ge.operator.as_ref().expect("requested"))?;
        let gt = &mut g.topologies[j];
        gt.cross = cross_hypergraphs_backward(&s.incidence, &cache.tph, &tc.cross, &d_st, &d_ts)?;
        gt.theta_a = ga.theta;
        gt.theta_d = gd.theta;
        gt.theta_e = ge.theta;
        gt.beta = dbeta;
    }
    let gb = hyper_conv_backward(x, &cache.tph_op, &p.theta_b, Axis::Time, &cache.b_cache, &db, false)?;
    dx.add_assign(&gb.input)?;
    g.theta_b = gb.theta;
    let (dxc, dgraph) = graph_conv_backward(&topo.partitions, &p.graph, &cache.c_cache, &dc)?;
    dx.add_assign(&dxc)?;
    g.graph = dgraph;

    match (&p.residual, &cache.residual_input) {
        (Some(proj), Some(sub)) => {
            let (dsub, dproj) = proj.backward(sub, grad)?;
            dx.add_assign(&subsample_time_backward(x.shape(), cfg.stride, &dsub)?)?;
            g.residual = Some(dproj);
        }
        _ if cfg.residual => dx.add_assign(grad)?,
        _ => {}
    }
    Ok((dx, g))
}

/// Batch intermediates of one block.
#[derive(Clone, Debug)]
pub struct BlockCache {
    pub samples: Vec<SampleCache>,
    bn: BatchNormCache,
    normalized: Vec<Tensor>,
}

pub struct BlockForward {
    pub outputs: Vec<Tensor>,
    pub cache: BlockCache,
    /// Updated running statistics in training mode.
    pub stats: Option<RunningStats>,
}

/// `relu(bn(sample_forward(x)))` over a batch. Samples are processed in
/// parallel; results keep batch order.
pub fn block_forward(
    p: &BlockParams,
    cfg: &BlockConfig,
    topo: &Topology,
    stats: &RunningStats,
    xs: &[Tensor],
    mode: Mode,
) -> Result<BlockForward> {
    let per: Vec<(Tensor, SampleCache)> = xs
        .par_iter()
        .map(|x| sample_forward(p, cfg, topo, x))
        .collect::<Result<_>>()?;
    let (pres, samples): (Vec<Tensor>, Vec<SampleCache>) = per.into_iter().unzip();
    let (normalized, bn, new_stats) = batch_norm(&pres, &p.bn.gamma, &p.bn.shift, stats, mode)?;
    let outputs = normalized.iter().map(|y| activate(y, Activation::Relu)).collect();
    Ok(BlockForward {
        outputs,
        cache: BlockCache {
            samples,
            bn,
            normalized,
        },
        stats: new_stats,
    })
}

/// Adjoint of [`block_forward`]. Per-sample gradients are summed in
/// batch order, so the result does not depend on the thread count.
pub fn block_backward(
    p: &BlockParams,
    cfg: &BlockConfig,
    topo: &Topology,
    xs: &[Tensor],
    cache: &BlockCache,
    grads: &[Tensor],
) -> Result<(Vec<Tensor>, BlockParams)> {
    if grads.len() != xs.len() || cache.samples.len() != xs.len() {
        return Err(Error::dim("block backward batch size mismatch"));
    }
    let dnorm: Vec<Tensor> = grads
        .iter()
        .zip(&cache.normalized)
        .map(|(g, y)| {
            let mut d = g.clone();
            for (a, &b) in d.data_mut().iter_mut().zip(y.data()) {
                if b <= 0.0 {
                    *a = 0.0;
                }
            }
            d
        })
        .collect();
    let bn = batch_norm_backward(&cache.bn, &p.bn.gamma, &dnorm)?;

    let mut total = zeros_like(p);
    let mut dxs = Vec::with_capacity(xs.len());
    let chunk = rayon::current_num_threads().max(1);
    let items: Vec<(usize, &Tensor)> = xs.iter().enumerate().collect();
    for part in items.chunks(chunk) {
        let results: Vec<(Tensor, BlockParams)> = part
            .par_iter()
            .map(|&(i, x)| sample_backward(p, cfg, topo, x, &cache.samples[i], &bn.input[i]))
            .collect::<Result<_>>()?;
        for (dx, g) in results {
            accumulate(&mut total, &g)?;
            dxs.push(dx);
        }
    }
    total.bn = NormParams {
        gamma: bn.gamma,
        shift: bn.shift,
    };
    Ok((dxs, total))
}
