//! Dense tensor kernels, each paired with a hand-derived adjoint.

pub mod activation;
pub mod channel;
pub mod contract;
pub mod gradcheck;
pub mod loss;
pub mod norm;
pub mod params;
pub mod temporal;

pub use activation::{activate, activate_backward, sigmoid, Activation};
pub use channel::{linear, linear_backward, pointwise_channel_map, pointwise_channel_map_backward, ProjectionGrads};
pub use contract::{contract_axis, contract_axis_grad_input, contract_axis_grad_matrix, Axis};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{argmax, softmax_cross_entropy, softmax_rows};
pub use norm::{batch_norm, batch_norm_backward, BatchNormCache, BatchNormGrads, Mode, RunningStats};
pub use params::{GradRecord, Params};
pub use temporal::{max_pool_time, subsample_time, temporal_conv, ConvGeometry};
