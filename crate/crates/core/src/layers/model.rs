//! The full network: input batch norm, a stack of blocks, global
//! average pooling and a linear classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{SkeletonDefinition, SkeletonId};
use crate::numcore::params::{impl_params, named, param_count};
use crate::numcore::temporal::{global_avg_pool, global_avg_pool_backward, strided_len};
use crate::numcore::{batch_norm, batch_norm_backward, linear, linear_backward, BatchNormCache, Mode, RunningStats};
use crate::tensor::Tensor;

use super::block::{block_backward, block_forward, BlockCache, BlockConfig, BlockParams, NormParams};
use super::conv::Projection;
use super::topology::Topology;

pub const DEFAULT_K_TEMPORAL: usize = 5;
pub const DEFAULT_K_SPATIAL: usize = 4;
pub const DEFAULT_KMEANS_CLUSTERS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub channels: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl BlockSpec {
    pub const fn new(channels: usize, stride: usize) -> Self {
        BlockSpec { channels, stride }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub skeleton: SkeletonId,
    pub in_channels: usize,
    pub num_classes: usize,
    pub frames: usize,
    pub blocks: Vec<BlockSpec>,
    #[serde(default = "default_k_temporal")]
    pub k_temporal: usize,
    #[serde(default = "default_k_spatial")]
    pub k_spatial: usize,
    #[serde(default = "default_clusters")]
    pub kmeans_clusters: usize,
    /// Seed of the k-means spatial hypergraph.
    #[serde(default)]
    pub kmeans_seed: u64,
    #[serde(default = "yes")]
    pub residual: bool,
    /// Batch norm over the raw input channels.
    #[serde(default = "yes")]
    pub input_norm: bool,
}

fn default_k_temporal() -> usize {
    DEFAULT_K_TEMPORAL
}
fn default_k_spatial() -> usize {
    DEFAULT_K_SPATIAL
}
fn default_clusters() -> usize {
    DEFAULT_KMEANS_CLUSTERS
}

impl ModelConfig {
    /// Ten blocks, widening at blocks five and eight where time is halved.
    pub fn default_blocks() -> Vec<BlockSpec> {
        [(64, 1), (64, 1), (64, 1), (64, 1), (128, 2), (128, 1), (128, 1), (256, 2), (256, 1), (256, 1)]
            .into_iter()
            .map(|(c, s)| BlockSpec::new(c, s))
            .collect()
    }

    /// Full-size configuration for 25-joint skeletons and 60 classes.
    pub fn ntu_default() -> Self {
        ModelConfig {
            skeleton: SkeletonId::Ntu25,
            in_channels: 3,
            num_classes: 60,
            frames: 64,
            blocks: Self::default_blocks(),
            k_temporal: DEFAULT_K_TEMPORAL,
            k_spatial: DEFAULT_K_SPATIAL,
            kmeans_clusters: DEFAULT_KMEANS_CLUSTERS,
            kmeans_seed: 0,
            residual: true,
            input_norm: true,
        }
    }

    /// Per-block configurations with frame counts threaded through.
    pub fn block_configs(&self) -> Result<Vec<BlockConfig>> {
        if self.blocks.is_empty() {
            return Err(Error::Config("model needs at least one block".into()));
        }
        if self.in_channels == 0 || self.frames == 0 {
            return Err(Error::Config("input channels and frames must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        let mut c_in = self.in_channels;
        let mut frames = self.frames;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let cfg = BlockConfig {
                c_in,
                c_out: b.channels,
                stride: b.stride,
                frames,
                k_temporal: self.k_temporal,
                residual: self.residual,
            };
            cfg.validate().map_err(|e| Error::Config(format!("block {i}: {e}")))?;
            c_in = b.channels;
            frames = strided_len(frames, b.stride);
            out.push(cfg);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub input_norm: Option<NormParams>,
    pub blocks: Vec<BlockParams>,
    /// `C_last × K` classifier.
    pub head: Projection,
}
impl_params!(ModelParams { input_norm, blocks, head });

/// Batch-norm running statistics; not learned, not counted as
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub input_norm: Option<RunningStats>,
    pub blocks: Vec<RunningStats>,
}

impl ModelState {
    /// `(path, tensor)` pairs in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let input = self.input_norm.iter().map(|s| ("input_norm".to_string(), s));
        let blocks = self.blocks.iter().enumerate().map(|(i, s)| (format!("blocks.{i}"), s));
        input
            .chain(blocks)
            .flat_map(|(p, s)| [(format!("{p}.mean"), &s.mean), (format!("{p}.var"), &s.var)])
            .collect()
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let input = self.input_norm.iter_mut().map(|s| ("input_norm".to_string(), s));
        let blocks = self.blocks.iter_mut().enumerate().map(|(i, s)| (format!("blocks.{i}"), s));
        input
            .chain(blocks)
            .flat_map(|(p, s)| [(format!("{p}.mean"), &mut s.mean), (format!("{p}.var"), &mut s.var)])
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub topology: Topology,
    pub block_configs: Vec<BlockConfig>,
    pub params: ModelParams,
    pub state: ModelState,
}

/// Intermediates of one batch through the model.
pub struct ModelCache {
    input_norm: Option<BatchNormCache>,
    /// Input of every block.
    pub block_inputs: Vec<Vec<Tensor>>,
    pub blocks: Vec<BlockCache>,
    /// Output of the last block.
    pub features: Vec<Tensor>,
    pooled: Tensor,
}

pub struct ForwardPass {
    pub logits: Tensor,
    pub cache: ModelCache,
    /// Updated running statistics in training mode.
    pub state: Option<ModelState>,
}

impl Model {
    /// Model for a built-in skeleton.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let sk = config
            .skeleton
            .definition()
            .ok_or_else(|| Error::Config("custom skeletons need an explicit definition".into()))?;
        Self::with_skeleton(config, &sk, seed)
    }

    pub fn with_skeleton(config: ModelConfig, sk: &SkeletonDefinition, seed: u64) -> Result<Self> {
        let block_configs = config.block_configs()?;
        let topology = Topology::build(sk, config.k_spatial, config.kmeans_clusters, config.kmeans_seed)
            .map_err(|e| Error::Config(format!("skeleton topology: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = block_configs
            .iter()
            .map(|b| BlockParams::init(b, &topology, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let last = block_configs.last().expect("validated").c_out;
        let bound = 1.0 / (last as f64).sqrt();
        let mut head = Projection::zeros(last, config.num_classes);
        for w in head.weight.data_mut() {
            *w = rand::Rng::gen_range(&mut rng, -bound..bound);
        }
        let params = ModelParams {
            input_norm: config.input_norm.then(|| NormParams::new(config.in_channels)),
            blocks,
            head,
        };
        let state = ModelState {
            input_norm: config.input_norm.then(|| RunningStats::new(config.in_channels)),
            blocks: block_configs.iter().map(|b| RunningStats::new(b.c_out)).collect(),
        };
        Ok(Model {
            config,
            topology,
            block_configs,
            params,
            state,
        })
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.params)
    }

    pub fn forward(&self, xs: &[Tensor], mode: Mode) -> Result<ForwardPass> {
        self.forward_with(&self.params, xs, mode)
    }

    /// Forward pass with an explicit parameter set of this model's shape.
    pub fn forward_with(&self, params: &ModelParams, xs: &[Tensor], mode: Mode) -> Result<ForwardPass> {
        if xs.is_empty() {
            return Err(Error::input("empty batch"));
        }
        let want = [self.config.in_channels, self.config.frames, self.topology.joints()];
        if let Some(x) = xs.iter().find(|x| x.shape() != want) {
            return Err(Error::dim(format!("model expects samples of shape {want:?}, got {:?}", x.shape())));
        }
        let mut new_state = ModelState {
            input_norm: None,
            blocks: Vec::with_capacity(self.block_configs.len()),
        };
        let (mut h, input_norm) = match (&params.input_norm, &self.state.input_norm) {
            (Some(p), Some(stats)) => {
                let (y, cache, s) = batch_norm(xs, &p.gamma, &p.shift, stats, mode)?;
                new_state.input_norm = s;
                (y, Some(cache))
            }
            _ => (xs.to_vec(), None),
        };
        let mut block_inputs = Vec::with_capacity(self.block_configs.len());
        let mut blocks = Vec::with_capacity(self.block_configs.len());
        for ((cfg, p), stats) in self.block_configs.iter().zip(&params.blocks).zip(&self.state.blocks) {
            let f = block_forward(p, cfg, &self.topology, stats, &h, mode)?;
            block_inputs.push(std::mem::replace(&mut h, f.outputs));
            blocks.push(f.cache);
            if let Some(s) = f.stats {
                new_state.blocks.push(s);
            }
        }
        let c = h[0].shape()[0];
        let mut pooled = Vec::with_capacity(xs.len() * c);
        for f in &h {
            pooled.extend_from_slice(global_avg_pool(f)?.data());
        }
        let pooled = Tensor::new(&[xs.len(), c], pooled)?;
        let logits = linear(&pooled, &params.head.weight, &params.head.bias)?;
        logits.check_finite("logits")?;
        let state = (mode == Mode::Train).then_some(new_state);
        Ok(ForwardPass {
            logits,
            cache: ModelCache {
                input_norm,
                block_inputs,
                blocks,
                features: h,
                pooled,
            },
            state,
        })
    }

    pub fn backward(&self, cache: &ModelCache, dlogits: &Tensor) -> Result<ModelParams> {
        self.backward_with(&self.params, cache, dlogits)
    }

    pub fn backward_with(&self, params: &ModelParams, cache: &ModelCache, dlogits: &Tensor) -> Result<ModelParams> {
        let head = linear_backward(&cache.pooled, &params.head.weight, dlogits)?;
        let c = cache.pooled.shape()[1];
        let mut grads: Vec<Tensor> = cache
            .features
            .iter()
            .enumerate()
            .map(|(b, f)| global_avg_pool_backward(f.shape(), &Tensor::new(&[c], head.input.data()[b * c..(b + 1) * c].to_vec())?))
            .collect::<Result<_>>()?;
        let mut blocks = Vec::with_capacity(self.block_configs.len());
        for i in (0..self.block_configs.len()).rev() {
            let (dx, g) = block_backward(
                &params.blocks[i],
                &self.block_configs[i],
                &self.topology,
                &cache.block_inputs[i],
                &cache.blocks[i],
                &grads,
            )?;
            grads = dx;
            blocks.push(g);
        }
        blocks.reverse();
        let input_norm = match (&cache.input_norm, &params.input_norm) {
            (Some(bc), Some(p)) => {
                let g = batch_norm_backward(bc, &p.gamma, &grads)?;
                Some(NormParams {
                    gamma: g.gamma,
                    shift: g.shift,
                })
            }
            _ => None,
        };
        Ok(ModelParams {
            input_norm,
            blocks,
            head: Projection {
                weight: head.weight,
                bias: head.bias,
            },
        })
    }

    /// Parameter paths and shapes, in archive order.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        named(&self.params)
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect()
    }
}
