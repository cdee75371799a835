//! One function per subcommand. Each reads its inputs, computes every
//! output in memory, and only then writes files atomically.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dsthcn::data::{gen_synthetic, read_skl, write_feature_csv, write_skl, Dataset, SkeletonSample, SynthOptions};
use dsthcn::hypergraph::knn::frame_vectors;
use dsthcn::hypergraph::{
    normalize, normalize_matrix, spatial_kmeans, spatial_knn, spatial_parts, tph_from_embeddings, IncidenceMatrix,
    SkeletonId,
};
use dsthcn::io::archive::CheckpointMeta;
use dsthcn::io::{decode_archive, encode_archive, matrix_csv, parse_scores_csv, scores_csv, write_atomic};
use dsthcn::layers::model::{DEFAULT_KMEANS_CLUSTERS, DEFAULT_K_SPATIAL, DEFAULT_K_TEMPORAL};
use dsthcn::layers::{Model, SpatialKind};
use dsthcn::numcore::Mode;
use dsthcn::training::{
    accuracy, evaluate, fuse_scores, metrics_csv, model_from_archive, model_to_archive, prepare_dataset, train_loop,
    StreamKind, StreamWeights,
};
use dsthcn::{Error, Result, Tensor};

use crate::config::{load_run_config, RunConfig};

pub const CHECKPOINT_FILE: &str = "model.dsta";
pub const LAST_CHECKPOINT_FILE: &str = "last.dsta";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";

fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Common `C×T×V` of every sample.
fn sample_shape(d: &Dataset, what: &str) -> Result<[usize; 3]> {
    let first = d
        .samples
        .first()
        .ok_or_else(|| input(format!("{what} has no samples")))?;
    let shape = [first.channels(), first.frames(), first.joints()];
    if let Some((i, s)) = d.samples.iter().enumerate().find(|(_, s)| s.data.shape() != shape) {
        return Err(input(format!(
            "{what}: sample {i} has shape {:?}, sample 0 has {shape:?}",
            s.data.shape()
        )));
    }
    Ok(shape)
}

fn pick_sample(d: &Dataset, index: usize) -> Result<Dataset> {
    let s = d
        .samples
        .get(index)
        .ok_or_else(|| input(format!("sample {index} out of range for {} samples", d.len())))?;
    Ok(Dataset {
        skeleton: d.skeleton,
        num_classes: d.num_classes,
        samples: vec![s.clone()],
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let archive = decode_archive(&read_bytes(path)?)?;
    let model = model_from_archive(&archive)?;
    Ok((model, archive.manifest.meta))
}

/// Applies the checkpoint's input pipeline and checks the result fits
/// the model.
fn model_input(model: &Model, meta: &CheckpointMeta, d: &Dataset) -> Result<Dataset> {
    let cfg = &model.config;
    if d.skeleton != cfg.skeleton || d.num_classes != cfg.num_classes {
        return Err(input(format!(
            "data is {} with {} classes, model expects {} with {}",
            d.skeleton.name(),
            d.num_classes,
            cfg.skeleton.name(),
            cfg.num_classes
        )));
    }
    let prepared = prepare_dataset(d, meta.stream, meta.preprocess, meta.dual_correlation)?;
    if !prepared.is_empty() {
        let [c, t, _] = sample_shape(&prepared, "data")?;
        if (c, t) != (cfg.in_channels, cfg.frames) {
            return Err(input(format!(
                "model expects {} channels and {} frames, data gives {c} and {t}",
                cfg.in_channels, cfg.frames
            )));
        }
    }
    Ok(prepared)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SkeletonArg {
    Ntu25,
    Ucla20,
}

impl From<SkeletonArg> for SkeletonId {
    fn from(s: SkeletonArg) -> Self {
        match s {
            SkeletonArg::Ntu25 => SkeletonId::Ntu25,
            SkeletonArg::Ucla20 => SkeletonId::Ucla20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StreamArg {
    Joint,
    Bone,
    JointMotion,
    BoneMotion,
}

impl From<StreamArg> for StreamKind {
    fn from(s: StreamArg) -> Self {
        match s {
            StreamArg::Joint => StreamKind::Joint,
            StreamArg::Bone => StreamKind::Bone,
            StreamArg::JointMotion => StreamKind::JointMotion,
            StreamArg::BoneMotion => StreamKind::BoneMotion,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TopologyArg {
    Knn,
    Kmeans,
    Parts,
}

impl From<TopologyArg> for SpatialKind {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::Knn => SpatialKind::Knn,
            TopologyArg::Kmeans => SpatialKind::Kmeans,
            TopologyArg::Parts => SpatialKind::Parts,
        }
    }
}

fn topology_index(model: &Model, kind: SpatialKind) -> usize {
    model
        .topology
        .spatial
        .iter()
        .position(|s| s.kind == kind)
        .expect("every model carries all spatial topologies")
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 24)]
    pub per_class: usize,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, value_enum, default_value_t = SkeletonArg::Ntu25)]
    pub skeleton: SkeletonArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the per-coordinate noise.
    #[arg(long, default_value_t = SynthOptions::default().noise)]
    pub noise: f64,
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let opts = SynthOptions {
        noise: a.noise,
        ..SynthOptions::default()
    };
    let d = gen_synthetic(a.classes, a.per_class, a.frames, a.skeleton.into(), a.seed, opts)?;
    write_skl(&a.out, &d)?;
    println!("wrote {} samples to {}", d.len(), a.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = StreamArg::Joint)]
    pub stream: StreamArg,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let train_raw = read_skl(&a.data)?;
    let val_raw = read_skl(&a.val)?;
    if (train_raw.skeleton, train_raw.num_classes) != (val_raw.skeleton, val_raw.num_classes) {
        return Err(input("training and validation files disagree on skeleton or class count"));
    }
    let stream = StreamKind::from(a.stream);
    let prep = |d: &Dataset| prepare_dataset(d, stream, cfg.data.preprocess, cfg.data.dual_correlation);
    let (train_set, val_set) = (prep(&train_raw)?, prep(&val_raw)?);
    let shape = sample_shape(&train_set, "training data")?;
    if sample_shape(&val_set, "validation data")? != shape {
        return Err(input("training and validation samples differ in shape"));
    }
    let [c, t, _] = shape;
    let model_cfg = cfg.model_config(train_set.skeleton, c, train_set.num_classes, t)?;
    let mut model = Model::new(model_cfg, cfg.seed)?;
    log::info!("{} parameters", model.param_count());
    let out = train_loop(&mut model, &train_set.samples, &val_set.samples, &cfg.train, cfg.seed, |r| {
        eprintln!(
            "epoch {:>3}  lr {:.5}  loss {:.4}  train {:.4}  val {:.4}",
            r.epoch, r.lr, r.train_loss, r.train_acc, r.val_acc
        )
    })?;
    let meta = |epoch: usize| {
        let r = &out.records[epoch];
        CheckpointMeta {
            stream,
            preprocess: cfg.data.preprocess,
            dual_correlation: cfg.data.dual_correlation,
            epoch,
            train_acc: r.train_acc,
            val_acc: r.val_acc,
        }
    };
    let best = encode_archive(&model_to_archive(&out.best, meta(out.best_epoch)))?;
    let last = encode_archive(&model_to_archive(&out.last, meta(out.records.len() - 1)))?;
    create_dir(&a.out_dir)?;
    write_atomic(&a.out_dir.join(CHECKPOINT_FILE), &best)?;
    write_atomic(&a.out_dir.join(LAST_CHECKPOINT_FILE), &last)?;
    write_atomic(&a.out_dir.join(METRICS_FILE), metrics_csv(&out.records).as_bytes())?;
    write_atomic(&a.out_dir.join(CONFIG_FILE), cfg.to_json().as_bytes())?;
    let r = &out.records[out.best_epoch];
    println!(
        "best epoch {}: train {} val {}; wrote {}",
        out.best_epoch,
        r.train_acc,
        r.val_acc,
        a.out_dir.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

pub fn eval(a: &EvalArgs) -> Result<f64> {
    let (model, meta) = load_checkpoint(&a.model)?;
    let d = model_input(&model, &meta, &read_skl(&a.data)?)?;
    if d.is_empty() {
        return Err(input(format!("{} has no samples", a.data.display())));
    }
    let scores = evaluate(&model, &d.tensors())?;
    let acc = accuracy(&scores, &d.labels());
    if let Some(p) = &a.scores_out {
        write_atomic(p, scores_csv(&scores)?.as_bytes())?;
    }
    println!("top-1 accuracy: {acc} ({} samples, {} stream)", d.len(), meta.stream);
    Ok(acc)
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Score tables written by `eval`, one per stream.
    #[arg(long, num_args = 1.., required = true)]
    pub scores: Vec<PathBuf>,
    /// One weight per table, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "streams")]
    pub weights: Option<Vec<f64>>,
    /// Stream of each table; weights then come from the stream weights.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub streams: Option<Vec<StreamArg>>,
    /// Run configuration supplying the stream weights.
    #[arg(long, requires = "streams")]
    pub config: Option<PathBuf>,
    /// Labelled data for reporting accuracy.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Where to write the fused score table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolved weights: explicit, from stream names, or 1 for a single table.
fn fuse_weights(a: &FuseArgs) -> Result<Vec<f64>> {
    if let Some(w) = &a.weights {
        return Ok(w.clone());
    }
    if let Some(streams) = &a.streams {
        let sw = match &a.config {
            Some(p) => load_run_config(p)?.streams,
            None => StreamWeights::default(),
        };
        return Ok(streams.iter().map(|&s| sw.get(s.into())).collect());
    }
    if a.scores.len() == 1 {
        return Ok(vec![1.0]);
    }
    Err(input("fusing several tables needs --weights or --streams"))
}

/// Fused scores and predictions, plus accuracy when labels are given.
pub fn fuse(a: &FuseArgs) -> Result<(Vec<usize>, Option<f64>)> {
    let weights = fuse_weights(a)?;
    let tables = a
        .scores
        .iter()
        .map(|p| {
            parse_scores_csv(&read_text(p)?).map_err(|e| match e {
                Error::Format { offset, message } => Error::Format {
                    offset,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<Tensor>>>()?;
    if let Some((p, t)) = a.scores.iter().zip(&tables).find(|(_, t)| t.shape()[0] != tables[0].shape()[0]) {
        return Err(input(format!(
            "{} has {} rows, {} has {}",
            p.display(),
            t.shape()[0],
            a.scores[0].display(),
            tables[0].shape()[0]
        )));
    }
    let (fused, preds) = fuse_scores(&tables, &weights)?;
    let acc = match &a.data {
        Some(p) => {
            let labels = read_skl(p)?.labels();
            if labels.len() != preds.len() {
                return Err(input(format!("{} labels for {} score rows", labels.len(), preds.len())));
            }
            Some(accuracy(&fused, &labels))
        }
        None => None,
    };
    if let Some(p) = &a.out {
        write_atomic(p, scores_csv(&fused)?.as_bytes())?;
    }
    match acc {
        Some(acc) => println!("top-1 accuracy: {acc} ({} samples, {} tables)", preds.len(), tables.len()),
        None => {
            println!("sample,class");
            for (i, p) in preds.iter().enumerate() {
                println!("{i},{p}");
            }
        }
    }
    Ok((preds, acc))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InspectWhat {
    Tph,
    SpatialKnn,
    SpatialKmeans,
    SpatialParts,
    Cross,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[arg(long, value_enum)]
    pub what: InspectWhat,
    /// Directory receiving incidence.csv, weights.csv and operator.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Neighbour count for the k-NN hypergraphs.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    /// k-means seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint whose learned reducer and cross projections are used.
    /// Required for `cross`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub block: usize,
    #[arg(long, value_enum, default_value_t = TopologyArg::Knn)]
    pub topology: TopologyArg,
}

/// `H`, `W` as a diagonal matrix, and `H̃`.
pub struct Inspection {
    pub incidence: Tensor,
    pub weights: Tensor,
    pub operator: Tensor,
}

fn inspection(inc: &IncidenceMatrix) -> Result<Inspection> {
    let w = inc.weights();
    let mut weights = Tensor::zeros(&[w.len(), w.len()]);
    for (i, &x) in w.iter().enumerate() {
        weights.set2(i, i, x);
    }
    Ok(Inspection {
        incidence: inc.matrix().clone(),
        weights,
        operator: normalize(inc)?.into_matrix(),
    })
}

/// Block intermediates of one prepared sample under a checkpoint.
fn sample_pass(model: &Model, meta: &CheckpointMeta, d: &Dataset, index: usize, block: usize) -> Result<dsthcn::layers::ForwardPass> {
    if block >= model.block_configs.len() {
        return Err(input(format!("block {block} out of range for {} blocks", model.block_configs.len())));
    }
    let one = model_input(model, meta, &pick_sample(d, index)?)?;
    model.forward(&one.tensors(), Mode::Eval)
}

pub fn inspect_matrices(a: &InspectArgs) -> Result<Inspection> {
    let d = read_skl(&a.data)?;
    let sk = d
        .skeleton
        .definition()
        .ok_or_else(|| input("inspection needs a built-in skeleton"))?;
    let checkpoint = a.model.as_deref().map(load_checkpoint).transpose()?;
    let model_cfg = checkpoint.as_ref().map(|(m, _)| &m.config);
    match a.what {
        InspectWhat::Tph => match &checkpoint {
            Some((model, meta)) => {
                let pass = sample_pass(model, meta, &d, a.sample, a.block)?;
                let h = pass.cache.blocks[a.block].samples[0].tph.clone();
                inspection(&IncidenceMatrix::from_dense(h)?)
            }
            None => {
                let s: &SkeletonSample = d
                    .samples
                    .get(a.sample)
                    .ok_or_else(|| input(format!("sample {} out of range for {} samples", a.sample, d.len())))?;
                let k = a.k.unwrap_or(DEFAULT_K_TEMPORAL).min(s.frames());
                inspection(&tph_from_embeddings(&frame_vectors(&s.data)?, k)?)
            }
        },
        InspectWhat::SpatialKnn => {
            let k = a.k.or(model_cfg.map(|c| c.k_spatial)).unwrap_or(DEFAULT_K_SPATIAL);
            inspection(&spatial_knn(&sk, k)?)
        }
        InspectWhat::SpatialKmeans => {
            let clusters = a
                .clusters
                .or(model_cfg.map(|c| c.kmeans_clusters))
                .unwrap_or(DEFAULT_KMEANS_CLUSTERS);
            let seed = model_cfg.map_or(a.seed, |c| c.kmeans_seed);
            inspection(&spatial_kmeans(&sk, clusters, seed)?)
        }
        InspectWhat::SpatialParts => inspection(&spatial_parts(&sk)?),
        InspectWhat::Cross => {
            let (model, meta) = checkpoint
                .as_ref()
                .ok_or_else(|| input("cross hypergraphs are learned; pass --model"))?;
            let pass = sample_pass(model, meta, &d, a.sample, a.block)?;
            let j = topology_index(model, a.topology.into());
            let st = pass.cache.blocks[a.block].samples[0].topologies[j].cross.st.clone();
            let t = st.shape()[1];
            let operator = normalize_matrix(&st, &vec![1.0; t])?;
            Ok(Inspection {
                incidence: st,
                weights: Tensor::identity(t),
                operator,
            })
        }
    }
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let m = inspect_matrices(a)?;
    let files = [
        ("incidence.csv", matrix_csv(&m.incidence)?),
        ("weights.csv", matrix_csv(&m.weights)?),
        ("operator.csv", matrix_csv(&m.operator)?),
    ];
    create_dir(&a.out)?;
    for (name, text) in &files {
        write_atomic(&a.out.join(name), text.as_bytes())?;
    }
    let (n, e) = (m.incidence.shape()[0], m.incidence.shape()[1]);
    println!("{n} nodes, {e} hyperedges; wrote {}", a.out.display());
    Ok(())
}

/// Block intermediates that can be exported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Feature {
    /// Spatial hypergraph convolution.
    A,
    /// Time-point hypergraph convolution.
    B,
    /// Graph convolution over the bone partitions.
    C,
    /// Spatial-to-temporal cross convolution.
    D,
    /// Temporal-to-spatial cross convolution.
    E,
    /// Fusion output for the selected topology alone.
    Hif,
    /// Fusion output summed over topologies.
    FOut,
    /// Block output.
    ZOut,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[arg(long, value_enum)]
    pub what: Feature,
    #[arg(long, default_value_t = 0)]
    pub block: usize,
    #[arg(long, value_enum, default_value_t = TopologyArg::Knn)]
    pub topology: TopologyArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn export_feature(a: &ExportArgs) -> Result<Tensor> {
    let (model, meta) = load_checkpoint(&a.model)?;
    let pass = sample_pass(&model, &meta, &read_skl(&a.data)?, a.sample, a.block)?;
    let cache = &pass.cache;
    let s = &cache.blocks[a.block].samples[0];
    let j = topology_index(&model, a.topology.into());
    Ok(match a.what {
        Feature::A => s.topologies[j].a.clone(),
        Feature::B => s.b.clone(),
        Feature::C => s.c.clone(),
        Feature::D => s.topologies[j].d.clone(),
        Feature::E => s.topologies[j].e.clone(),
        Feature::Hif => s.fused_for(j, &model.params.blocks[a.block])?,
        Feature::FOut => s.fused.clone(),
        Feature::ZOut => match cache.block_inputs.get(a.block + 1) {
            Some(next) => next[0].clone(),
            None => cache.features[0].clone(),
        },
    })
}

pub fn export_features(a: &ExportArgs) -> Result<()> {
    let x = export_feature(a)?;
    write_feature_csv(&a.out, &x)?;
    let (c, t, v) = x.dims3()?;
    println!("{c} channels × {t} frames × {v} joints; wrote {}", a.out.display());
    Ok(())
}
