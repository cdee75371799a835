//! Dynamic spatial-temporal hypergraph convolution networks for
//! skeleton-based action recognition.

pub mod error;
pub mod data;
pub mod hypergraph;
pub mod io;
pub mod layers;
pub mod numcore;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
