//! The symmetric hypergraph operator
//! `D_v^{-1/2} H W D_e^{-1} Hᵀ D_v^{-1/2}` and its adjoint.

use crate::error::{Error, Result};
use crate::hypergraph::incidence::IncidenceMatrix;
use crate::tensor::Tensor;

/// Degrees below this are floored before inversion.
pub const DEGREE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedOperator {
    matrix: Tensor,
}

impl NormalizedOperator {
    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor {
        self.matrix
    }

    /// `H̃ + H̃ᵀ`, the operator of the edge-aware convolution.
    pub fn symmetrized(&self) -> Tensor {
        let t = self.matrix.transpose2().expect("operator is square");
        self.matrix.add(&t).expect("operator is square")
    }
}

pub fn normalize(inc: &IncidenceMatrix) -> Result<NormalizedOperator> {
    Ok(NormalizedOperator {
        matrix: normalize_matrix(inc.matrix(), inc.weights())?,
    })
}

struct Degrees {
    /// `max(d_v, ε)^{-1/2}`
    node_scale: Vec<f64>,
    /// `W_e / max(d_e, ε)`
    edge_scale: Vec<f64>,
    node_deg: Vec<f64>,
    edge_deg: Vec<f64>,
}

fn degrees(h: &Tensor, w: &[f64]) -> Result<Degrees> {
    let (n, e) = h.dims2()?;
    if n == 0 || e == 0 {
        return Err(Error::input("cannot normalize an empty incidence matrix"));
    }
    if w.len() != e {
        return Err(Error::dim(format!("{} weights for {e} hyperedges", w.len())));
    }
    let hd = h.data();
    let mut node_deg = vec![0.0; n];
    let mut edge_deg = vec![0.0; e];
    for i in 0..n {
        for j in 0..e {
            let a = hd[i * e + j].abs();
            node_deg[i] += w[j] * a;
            edge_deg[j] += a;
        }
    }
    Ok(Degrees {
        node_scale: node_deg.iter().map(|d| d.max(DEGREE_FLOOR).powf(-0.5)).collect(),
        edge_scale: edge_deg.iter().zip(w).map(|(d, wj)| wj / d.max(DEGREE_FLOOR)).collect(),
        node_deg,
        edge_deg,
    })
}

/// Normalized operator of a dense (possibly signed) incidence matrix.
/// Degrees use absolute entries.
pub fn normalize_matrix(h: &Tensor, w: &[f64]) -> Result<Tensor> {
    let deg = degrees(h, w)?;
    let (n, e) = h.dims2()?;
    let hd = h.data();
    // H scaled by edge factors, row-major n×e.
    let mut hb = vec![0.0; n * e];
    for i in 0..n {
        for j in 0..e {
            hb[i * e + j] = hd[i * e + j] * deg.edge_scale[j];
        }
    }
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for k in i..n {
            let s: f64 = (0..e).map(|j| hb[i * e + j] * hd[k * e + j]).sum();
            let val = deg.node_scale[i] * s * deg.node_scale[k];
            out.set2(i, k, val);
            out.set2(k, i, val);
        }
    }
    Ok(out)
}

/// Gradient of `⟨grad, normalize_matrix(h, w)⟩` with respect to `h`,
/// weights held fixed.
pub fn normalize_matrix_backward(h: &Tensor, w: &[f64], grad: &Tensor) -> Result<Tensor> {
    let deg = degrees(h, w)?;
    let (n, e) = h.dims2()?;
    if grad.shape() != [n, n] {
        return Err(Error::dim("normalize backward gradient shape"));
    }
    let hd = h.data();
    let gd = grad.data();
    let a = &deg.node_scale;
    let b = &deg.edge_scale;

    // S = H B Hᵀ
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for k in i..n {
            let v: f64 = (0..e).map(|j| hd[i * e + j] * b[j] * hd[k * e + j]).sum();
            s[i * n + k] = v;
            s[k * n + i] = v;
        }
    }
    // dL/dS = A G A, symmetrized because S is symmetric.
    let mut gs = vec![0.0; n * n];
    let mut da = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            let g = gd[i * n + k];
            gs[i * n + k] = a[i] * g * a[k];
            da[i] += g * s[i * n + k] * a[k];
            da[k] += g * s[i * n + k] * a[i];
        }
    }
    let mut dh = Tensor::zeros(&[n, e]);
    let mut db = vec![0.0; e];
    {
        let dhd = dh.data_mut();
        // dH += (GS + GSᵀ) H B ; db_j = Σ_ik GS_ik H_ij H_kj
        for i in 0..n {
            for k in 0..n {
                let sym = gs[i * n + k] + gs[k * n + i];
                if sym == 0.0 {
                    continue;
                }
                for j in 0..e {
                    dhd[i * e + j] += sym * hd[k * e + j] * b[j];
                }
            }
        }
        for j in 0..e {
            let mut acc = 0.0;
            for i in 0..n {
                let hi = hd[i * e + j];
                if hi == 0.0 {
                    continue;
                }
                for k in 0..n {
                    acc += gs[i * n + k] * hi * hd[k * e + j];
                }
            }
            db[j] = acc;
        }
        // Through the degree floors and absolute values.
        let ddv: Vec<f64> = (0..n)
            .map(|i| {
                if deg.node_deg[i] > DEGREE_FLOOR {
                    da[i] * -0.5 * deg.node_deg[i].powf(-1.5)
                } else {
                    0.0
                }
            })
            .collect();
        let dde: Vec<f64> = (0..e)
            .map(|j| {
                if deg.edge_deg[j] > DEGREE_FLOOR {
                    -db[j] * w[j] / (deg.edge_deg[j] * deg.edge_deg[j])
                } else {
                    0.0
                }
            })
            .collect();
        for i in 0..n {
            for j in 0..e {
                let x = hd[i * e + j];
                let sign = if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                dhd[i * e + j] += sign * (ddv[i] * w[j] + dde[j]);
            }
        }
    }
    Ok(dh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{grad_check, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_node_single_edge() {
        let inc = IncidenceMatrix::from_columns(1, &[vec![0]]).unwrap();
        assert_eq!(normalize(&inc).unwrap().matrix().data(), &[1.0]);
    }

    #[test]
    fn two_nodes_one_edge() {
        let inc = IncidenceMatrix::from_columns(2, &[vec![0, 1]]).unwrap();
        let m = normalize(&inc).unwrap();
        for &x in m.matrix().data() {
            assert!((x - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_is_input_error() {
        let r = normalize_matrix(&Tensor::zeros(&[0, 2]), &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn isolated_node_is_floored_not_infinite() {
        let inc = IncidenceMatrix::from_dense(Tensor::from_rows(&[vec![1.0], vec![0.0]]).unwrap()).unwrap();
        let m = normalize(&inc).unwrap();
        m.matrix().check_finite("operator").unwrap();
        assert_eq!(m.matrix().at2(1, 1), 0.0);
    }

    #[test]
    fn signed_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(n, e) in &[(2, 2), (3, 4), (4, 3), (5, 5), (6, 2)] {
            let h = random_tensor(&mut rng, &[n, e]).map(|x| x.tanh());
            let w: Vec<f64> = (0..e).map(|j| 0.5 + j as f64 * 0.3).collect();
            let r = random_tensor(&mut rng, &[n, n]);
            let dh = normalize_matrix_backward(&h, &w, &r).unwrap();
            let rep = grad_check(&[h], &[dh], |p| Ok(normalize_matrix(&p[0], &w)?.dot(&r))).unwrap();
            assert!(rep.max_rel_error < 1e-4, "{n}x{e}: {rep:?}");
        }
    }
}
