//! Hypergraph construction and normalization.

pub mod cross;
pub mod incidence;
pub mod kmeans;
pub mod knn;
pub mod normalize;
pub mod parts;
pub mod skeleton;

pub use cross::{cross_hypergraphs, cross_hypergraphs_backward, CrossHypergraphs, CrossProjections};
pub use incidence::IncidenceMatrix;
pub use kmeans::{kmeans, spatial_kmeans, KMeansResult};
pub use knn::{reduced_channels, spatial_knn, tph_from_embeddings, tph_knn};
pub use normalize::{normalize, normalize_matrix, normalize_matrix_backward, NormalizedOperator, DEGREE_FLOOR};
pub use parts::{graph_partitions, spatial_parts};
pub use skeleton::{SkeletonDefinition, SkeletonId};
