use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Node × hyperedge incidence with per-hyperedge weights.
///
/// Constructed hypergraphs are binary; cross hypergraphs carry signed
/// real entries.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceMatrix {
    h: Tensor,
    weights: Vec<f64>,
}

impl IncidenceMatrix {
    /// Binary incidence where column `e` contains the listed nodes.
    pub fn from_columns(nodes: usize, columns: &[Vec<usize>]) -> Result<Self> {
        if nodes == 0 || columns.is_empty() {
            return Err(Error::input("incidence matrix needs nodes and hyperedges"));
        }
        let e = columns.len();
        let mut h = Tensor::zeros(&[nodes, e]);
        for (col, members) in columns.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::input(format!("hyperedge {col} is empty")));
            }
            for &n in members {
                if n >= nodes {
                    return Err(Error::input(format!("node {n} out of range in hyperedge {col}")));
                }
                h.set2(n, col, 1.0);
            }
        }
        Ok(IncidenceMatrix {
            h,
            weights: vec![1.0; e],
        })
    }

    /// Wraps a dense `n×e` matrix with unit weights.
    pub fn from_dense(h: Tensor) -> Result<Self> {
        let (n, e) = h.dims2()?;
        if n == 0 || e == 0 {
            return Err(Error::input("empty incidence matrix"));
        }
        h.check_finite("incidence")?;
        Ok(IncidenceMatrix {
            h,
            weights: vec![1.0; e],
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.edges() {
            return Err(Error::dim(format!("{} weights for {} hyperedges", weights.len(), self.edges())));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::input("hyperedge weights must be positive and finite"));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn nodes(&self) -> usize {
        self.h.shape()[0]
    }

    pub fn edges(&self) -> usize {
        self.h.shape()[1]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_binary(&self) -> bool {
        self.h.data().iter().all(|&x| x == 0.0 || x == 1.0)
    }

    /// Nodes with a nonzero entry in each column.
    pub fn columns(&self) -> Vec<Vec<usize>> {
        (0..self.edges())
            .map(|e| (0..self.nodes()).filter(|&n| self.h.at2(n, e) != 0.0).collect())
            .collect()
    }

    /// Column member sets, sorted, for order-insensitive comparison.
    pub fn column_sets(&self) -> Vec<Vec<usize>> {
        let mut cols = self.columns();
        cols.sort();
        cols
    }
}
