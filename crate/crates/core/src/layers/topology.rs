//! Static skeleton structure shared by every block of a model.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{graph_partitions, normalize, spatial_kmeans, spatial_knn, spatial_parts, IncidenceMatrix, SkeletonDefinition};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialKind {
    Knn,
    Kmeans,
    Parts,
}

impl SpatialKind {
    pub const ALL: [SpatialKind; 3] = [SpatialKind::Knn, SpatialKind::Kmeans, SpatialKind::Parts];
}

impl fmt::Display for SpatialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpatialKind::Knn => "knn",
            SpatialKind::Kmeans => "kmeans",
            SpatialKind::Parts => "parts",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialTopology {
    pub kind: SpatialKind,
    /// Binary `V×E` incidence.
    pub incidence: Tensor,
    /// `H̃ + H̃ᵀ` of the incidence.
    pub operator: Tensor,
}

impl SpatialTopology {
    pub fn new(kind: SpatialKind, inc: &IncidenceMatrix) -> Result<Self> {
        Ok(SpatialTopology {
            kind,
            incidence: inc.matrix().clone(),
            operator: normalize(inc)?.symmetrized(),
        })
    }

    pub fn edges(&self) -> usize {
        self.incidence.shape()[1]
    }
}

/// The three spatial hypergraphs plus the skeleton-graph partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub spatial: Vec<SpatialTopology>,
    pub partitions: Vec<Tensor>,
}

impl Topology {
    pub fn build(sk: &SkeletonDefinition, k_spatial: usize, clusters: usize, seed: u64) -> Result<Self> {
        let spatial = vec![
            SpatialTopology::new(SpatialKind::Knn, &spatial_knn(sk, k_spatial)?)?,
            SpatialTopology::new(SpatialKind::Kmeans, &spatial_kmeans(sk, clusters, seed)?)?,
            SpatialTopology::new(SpatialKind::Parts, &spatial_parts(sk)?)?,
        ];
        Ok(Topology {
            spatial,
            partitions: graph_partitions(sk),
        })
    }

    pub fn joints(&self) -> usize {
        self.partitions.first().map_or(0, |p| p.shape()[0])
    }

    /// Relabels joints so that old joint `j` becomes `perm[j]`; hyperedge
    /// order is kept.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let v = self.joints();
        check_perm(perm, v)?;
        let sq = |m: &Tensor| {
            let mut out = Tensor::zeros(m.shape());
            for i in 0..v {
                for j in 0..v {
                    out.set2(perm[i], perm[j], m.at2(i, j));
                }
            }
            out
        };
        Ok(Topology {
            spatial: self
                .spatial
                .iter()
                .map(|s| SpatialTopology {
                    kind: s.kind,
                    incidence: permute_rows(&s.incidence, perm),
                    operator: sq(&s.operator),
                })
                .collect(),
            partitions: self.partitions.iter().map(sq).collect(),
        })
    }
}

pub(crate) fn check_perm(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::input(format!("not a permutation of {n} joints")));
    }
    Ok(())
}

/// Row `i` moves to row `perm[i]`.
pub(crate) fn permute_rows(m: &Tensor, perm: &[usize]) -> Tensor {
    let cols = m.shape()[1];
    let mut out = Tensor::zeros(m.shape());
    for (i, &p) in perm.iter().enumerate() {
        out.data_mut()[p * cols..(p + 1) * cols].copy_from_slice(&m.data()[i * cols..(i + 1) * cols]);
    }
    out
}

/// Column `j` moves to column `perm[j]`.
pub(crate) fn permute_cols(m: &Tensor, perm: &[usize]) -> Tensor {
    let (r, c) = (m.shape()[0], m.shape()[1]);
    let mut out = Tensor::zeros(m.shape());
    for i in 0..r {
        for (j, &p) in perm.iter().enumerate() {
            out.data_mut()[i * c + p] = m.data()[i * c + j];
        }
    }
    out
}

/// Moves joint `v` of a `C×T×V` tensor to `perm[v]`.
pub fn permute_joints(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let (c, t, v) = x.dims3()?;
    check_perm(perm, v)?;
    let flat = x.clone().reshape(&[c * t, v])?;
    permute_cols(&flat, perm).reshape(&[c, t, v])
}
