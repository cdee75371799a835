//! Centripetal/centrifugal joint groupings relative to the skeleton
//! centre, as hyperedges and as normalized adjacency partitions.

use crate::error::Result;
use crate::hypergraph::incidence::IncidenceMatrix;
use crate::hypergraph::skeleton::SkeletonDefinition;
use crate::tensor::Tensor;

/// For each joint, a centripetal hyperedge (the joint and its bone
/// neighbours closer to the centre) followed by a centrifugal one
/// (neighbours farther away). Duplicate columns keep their first
/// occurrence.
pub fn spatial_parts(sk: &SkeletonDefinition) -> Result<IncidenceMatrix> {
    let depth = sk.hop_distances(sk.center_joint());
    let mut columns: Vec<Vec<usize>> = Vec::new();
    for v in 0..sk.num_joints() {
        for closer in [true, false] {
            let mut col: Vec<usize> = sk
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&u| if closer { depth[u] < depth[v] } else { depth[u] > depth[v] })
                .collect();
            col.push(v);
            col.sort_unstable();
            if !columns.contains(&col) {
                columns.push(col);
            }
        }
    }
    IncidenceMatrix::from_columns(sk.num_joints(), &columns)
}

/// Adjacency partitions `[I, centripetal, centrifugal]`, each returned
/// as the row-normalized `D⁻¹(A_k + I)`.
pub fn graph_partitions(sk: &SkeletonDefinition) -> Vec<Tensor> {
    let v = sk.num_joints();
    let depth = sk.hop_distances(sk.center_joint());
    let mut parts = [Tensor::zeros(&[v, v]), Tensor::zeros(&[v, v]), Tensor::zeros(&[v, v])];
    for j in 0..v {
        for &u in sk.neighbors(j) {
            let which = if depth[u] < depth[j] { 1 } else { 2 };
            parts[which].set2(j, u, 1.0);
        }
    }
    parts.iter().map(row_normalize_with_self_loops).collect()
}

/// `D⁻¹(A + I)` with `D` the row sums of `A + I`.
pub fn row_normalize_with_self_loops(a: &Tensor) -> Tensor {
    let n = a.shape()[0];
    let mut out = a.add(&Tensor::identity(n)).expect("square adjacency");
    for row in out.data_mut().chunks_exact_mut(n) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_centered_middle() -> SkeletonDefinition {
        // a - b - c with centre b
        SkeletonDefinition::new(vec![1, 1, 1], 1, vec![[0.0; 3]; 3]).unwrap()
    }

    #[test]
    fn chain_endpoint_groups() {
        let inc = spatial_parts(&chain_centered_middle()).unwrap();
        let cols = inc.columns();
        assert_eq!(cols[0], vec![0, 1]); // a centripetal
        assert_eq!(cols[1], vec![0]); // a centrifugal
        assert_eq!(cols[2], vec![1]); // centre centripetal
        assert_eq!(cols[3], vec![0, 1, 2]); // centre centrifugal
    }

    #[test]
    fn star_dedup_bound() {
        let sk = SkeletonDefinition::new(vec![0, 0, 0, 0, 0], 0, vec![[0.0; 3]; 5]).unwrap();
        let inc = spatial_parts(&sk).unwrap();
        assert!(inc.edges() <= 10);
        let sets = inc.column_sets();
        let mut dedup = sets.clone();
        dedup.dedup();
        assert_eq!(sets, dedup);
        let ntu = spatial_parts(&SkeletonDefinition::ntu25()).unwrap();
        assert!(ntu.edges() <= 50);
    }

    #[test]
    fn partitions_are_row_stochastic() {
        let parts = graph_partitions(&SkeletonDefinition::ntu25());
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[0], Tensor::identity(25));
        for p in &parts {
            for row in p.data().chunks_exact(25) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }
}
