//! k-nearest-neighbour hyperedges over frames and over joints.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::hypergraph::incidence::IncidenceMatrix;
use crate::hypergraph::skeleton::SkeletonDefinition;
use crate::numcore::pointwise_channel_map;
use crate::tensor::Tensor;

/// One hyperedge per node: the node itself followed by its `k - 1`
/// nearest other nodes under `dist`, ties to the smaller index.
pub fn knn_columns<D>(n: usize, k: usize, dist: D) -> Result<Vec<Vec<usize>>>
where
    D: Fn(usize, usize) -> f64,
{
    if k < 1 || k > n {
        return Err(Error::input(format!("k = {k} must lie in [1, {n}]")));
    }
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)).collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        let mut col = Vec::with_capacity(k);
        col.push(i);
        col.extend(others.iter().take(k - 1).map(|&(_, j)| j));
        columns.push(col);
    }
    Ok(columns)
}

/// Width of the reduced frame embedding used to build the time-point
/// hypergraph.
pub fn reduced_channels(channels: usize) -> usize {
    (channels / 4).max(2)
}

/// Time-point hypergraph from per-frame embedding vectors.
pub fn tph_from_embeddings(frames: &[Vec<f64>], k: usize) -> Result<IncidenceMatrix> {
    let t = frames.len();
    if t == 0 {
        return Err(Error::input("no frames"));
    }
    let cols = knn_columns(t, k, |a, b| {
        frames[a].iter().zip(&frames[b]).map(|(x, y)| (x - y) * (x - y)).sum()
    })?;
    IncidenceMatrix::from_columns(t, &cols)
}

/// Time-point hypergraph (`T × T`) of a `C×T×V` feature tensor: the
/// reducer projects channels, each frame is flattened to a `C_r·V`
/// vector, and every frame's hyperedge gathers its nearest frames.
pub fn tph_knn(x: &Tensor, k: usize, reducer_weight: &Tensor, reducer_bias: &Tensor) -> Result<IncidenceMatrix> {
    let (_, t, _) = x.dims3()?;
    if k < 1 || k > t {
        return Err(Error::input(format!("temporal k = {k} must lie in [1, {t}]")));
    }
    let reduced = pointwise_channel_map(x, reducer_weight, Some(reducer_bias))?;
    tph_from_embeddings(&frame_vectors(&reduced)?, k)
}

/// Flattens each frame of a `C×T×V` tensor into one `C·V` vector.
pub fn frame_vectors(x: &Tensor) -> Result<Vec<Vec<f64>>> {
    let (c, t, v) = x.dims3()?;
    Ok((0..t)
        .map(|tt| {
            (0..c)
                .flat_map(|ch| {
                    let base = (ch * t + tt) * v;
                    x.data()[base..base + v].iter().copied()
                })
                .collect()
        })
        .collect())
}

/// One hyperedge per joint holding the joint and its `k - 1` hop-nearest
/// joints on the bone tree.
pub fn spatial_knn(sk: &SkeletonDefinition, k: usize) -> Result<IncidenceMatrix> {
    let v = sk.num_joints();
    let hops: Vec<Vec<usize>> = (0..v).map(|j| sk.hop_distances(j)).collect();
    let cols = knn_columns(v, k, |a, b| hops[a][b] as f64)?;
    IncidenceMatrix::from_columns(v, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> SkeletonDefinition {
        let parent = (0..n).map(|j| j.saturating_sub(1)).collect();
        SkeletonDefinition::new(parent, 0, vec![[0.0; 3]; n]).unwrap()
    }

    #[test]
    fn three_frames_k2() {
        let frames = vec![vec![0.0], vec![1.0], vec![10.0]];
        let inc = tph_from_embeddings(&frames, 2).unwrap();
        assert_eq!(inc.columns(), vec![vec![0, 1], vec![0, 1], vec![1, 2]]);
    }

    #[test]
    fn limits_k1_and_kt() {
        let frames: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.3, 1.0]).collect();
        let id = tph_from_embeddings(&frames, 1).unwrap();
        assert_eq!(id.matrix(), &Tensor::identity(4));
        let full = tph_from_embeddings(&frames, 4).unwrap();
        assert!(full.matrix().data().iter().all(|&x| x == 1.0));
        assert!(tph_from_embeddings(&frames, 0).is_err());
        assert!(tph_from_embeddings(&frames, 5).is_err());
    }

    #[test]
    fn chain_middle_prefers_smaller_index() {
        let inc = spatial_knn(&chain(3), 2).unwrap();
        assert_eq!(inc.columns()[1], vec![0, 1]);
    }

    #[test]
    fn star_leaf_joins_hub() {
        let sk = SkeletonDefinition::new(vec![0, 0, 0, 0, 0], 0, vec![[0.0; 3]; 5]).unwrap();
        let inc = spatial_knn(&sk, 2).unwrap();
        assert_eq!(inc.columns()[3], vec![0, 3]);
        assert_eq!(spatial_knn(&sk, 1).unwrap().matrix(), &Tensor::identity(5));
        assert!(spatial_knn(&sk, 6).is_err());
    }

    #[test]
    fn tph_on_tensor_uses_reducer() {
        // constant-in-time sample: all frames coincide, ties go by index
        let x = Tensor::full(&[3, 4, 2], 0.7);
        let w = Tensor::full(&[3, 2], 0.1);
        let inc = tph_knn(&x, 2, &w, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(inc.columns()[3], vec![0, 3]);
        assert_eq!(tph_knn(&x, 1, &w, &Tensor::zeros(&[2])).unwrap().matrix(), &Tensor::identity(4));
        assert_eq!(reduced_channels(3), 2);
        assert_eq!(reduced_channels(64), 16);
    }
}
