//! Network layers, each with a forward pass and a hand-derived backward
//! pass.

pub mod block;
pub mod conv;
pub mod hif;
pub mod model;
pub mod tf;
pub mod topology;

pub use block::{block_backward, block_forward, sample_backward, sample_forward, BlockConfig, BlockParams, NormParams};
pub use conv::{graph_conv, graph_conv_backward, hyper_conv, GraphConvParams, Projection};
pub use hif::{compute_bundle, hif_fuse, hif_fuse_backward, BundleOperators, BundleThetas, FeatureBundle};
pub use model::{BlockSpec, ForwardPass, Model, ModelConfig, ModelParams, ModelState};
pub use tf::{ms_temporal_tf, ms_temporal_tf_backward, TfParams};
pub use topology::{permute_joints, SpatialKind, Topology};
