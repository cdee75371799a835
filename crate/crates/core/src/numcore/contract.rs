//! Contraction of a `C×T×V` feature tensor with a square matrix along
//! the time or vertex axis.

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Time,
    Vertex,
}

fn check(x: &Tensor, m: &Tensor, axis: Axis) -> Result<(usize, usize, usize)> {
    let (c, t, v) = x.dims3()?;
    let (r, k) = m.dims2()?;
    let n = match axis {
        Axis::Time => t,
        Axis::Vertex => v,
    };
    if r != n || k != n {
        return Err(Error::dim(format!(
            "{axis:?} contraction needs a {n}×{n} matrix, got {r}×{k}"
        )));
    }
    Ok((c, t, v))
}

/// `out[c,t,w] = Σ_v x[c,t,v]·m[v,w]` on the vertex axis and
/// `out[c,s,v] = Σ_t x[c,t,v]·m[t,s]` on the time axis.
pub fn contract_axis(x: &Tensor, m: &Tensor, axis: Axis) -> Result<Tensor> {
    let (c, t, v) = check(x, m, axis)?;
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    let md = m.data();
    let od = out.data_mut();
    match axis {
        Axis::Vertex => {
            for (xrow, orow) in xd.chunks_exact(v).zip(od.chunks_exact_mut(v)) {
                for (p, &a) in xrow.iter().enumerate() {
                    if a != 0.0 {
                        axpy(a, &md[p * v..(p + 1) * v], orow);
                    }
                }
            }
        }
        Axis::Time => {
            for ch in 0..c {
                let xs = &xd[ch * t * v..(ch + 1) * t * v];
                let os = &mut od[ch * t * v..(ch + 1) * t * v];
                for s in 0..t {
                    let orow = &mut os[s * v..(s + 1) * v];
                    for tt in 0..t {
                        let a = md[tt * t + s];
                        if a != 0.0 {
                            axpy(a, &xs[tt * v..(tt + 1) * v], orow);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`contract_axis`] with respect to `x`: contracts `grad`
/// with `mᵀ`.
pub fn contract_axis_grad_input(grad: &Tensor, m: &Tensor, axis: Axis) -> Result<Tensor> {
    let (c, t, v) = check(grad, m, axis)?;
    let mut out = Tensor::zeros(grad.shape());
    let gd = grad.data();
    let md = m.data();
    let od = out.data_mut();
    match axis {
        Axis::Vertex => {
            for (grow, orow) in gd.chunks_exact(v).zip(od.chunks_exact_mut(v)) {
                for (p, o) in orow.iter_mut().enumerate() {
                    *o = dot(&md[p * v..(p + 1) * v], grow);
                }
            }
        }
        Axis::Time => {
            for ch in 0..c {
                let gs = &gd[ch * t * v..(ch + 1) * t * v];
                let os = &mut od[ch * t * v..(ch + 1) * t * v];
                for tt in 0..t {
                    let orow = &mut os[tt * v..(tt + 1) * v];
                    for s in 0..t {
                        let a = md[tt * t + s];
                        if a != 0.0 {
                            axpy(a, &gs[s * v..(s + 1) * v], orow);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`contract_axis`] with respect to the matrix.
pub fn contract_axis_grad_matrix(x: &Tensor, grad: &Tensor, axis: Axis) -> Result<Tensor> {
    x.same_shape(grad)?;
    let (c, t, v) = x.dims3()?;
    let xd = x.data();
    let gd = grad.data();
    match axis {
        Axis::Vertex => {
            let mut dm = Tensor::zeros(&[v, v]);
            let dd = dm.data_mut();
            for (xrow, grow) in xd.chunks_exact(v).zip(gd.chunks_exact(v)) {
                for (p, &a) in xrow.iter().enumerate() {
                    if a != 0.0 {
                        axpy(a, grow, &mut dd[p * v..(p + 1) * v]);
                    }
                }
            }
            Ok(dm)
        }
        Axis::Time => {
            let mut dm = Tensor::zeros(&[t, t]);
            let dd = dm.data_mut();
            for ch in 0..c {
                let base = ch * t * v;
                for tt in 0..t {
                    let xrow = &xd[base + tt * v..base + (tt + 1) * v];
                    for s in 0..t {
                        dd[tt * t + s] += dot(xrow, &gd[base + s * v..base + (s + 1) * v]);
                    }
                }
            }
            Ok(dm)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{grad_check, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, &[3, 4, 5]);
        for (axis, n) in [(Axis::Vertex, 5), (Axis::Time, 4)] {
            let y = contract_axis(&x, &Tensor::identity(n), axis).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn swap_matrix_on_ones() {
        let x = Tensor::full(&[1, 1, 2], 1.0);
        let m = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(contract_axis(&x, &m, Axis::Vertex).unwrap(), x);
    }

    #[test]
    fn hand_evaluated_vertex_sum() {
        let x = Tensor::new(&[1, 1, 2], vec![1.0, 2.0]).unwrap();
        let m = Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let y = contract_axis(&x, &m, Axis::Vertex).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0]);
    }

    #[test]
    fn time_axis_matches_explicit_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, &[2, 3, 4]);
        let m = random_tensor(&mut rng, &[3, 3]);
        let y = contract_axis(&x, &m, Axis::Time).unwrap();
        for c in 0..2 {
            for s in 0..3 {
                for v in 0..4 {
                    let want: f64 = (0..3).map(|t| x.at3(c, t, v) * m.at2(t, s)).sum();
                    assert!((y.at3(c, s, v) - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn wrong_extent_is_dimension_error() {
        let x = Tensor::zeros(&[1, 3, 4]);
        assert!(matches!(
            contract_axis(&x, &Tensor::identity(3), Axis::Vertex),
            Err(Error::Dimension(_))
        ));
        assert!(contract_axis(&x, &Tensor::zeros(&[3, 4]), Axis::Time).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for axis in [Axis::Time, Axis::Vertex] {
            let x = random_tensor(&mut rng, &[2, 4, 3]);
            let n = if axis == Axis::Time { 4 } else { 3 };
            let m = random_tensor(&mut rng, &[n, n]);
            let r = random_tensor(&mut rng, &[2, 4, 3]);
            let dx = contract_axis_grad_input(&r, &m, axis).unwrap();
            let dm = contract_axis_grad_matrix(&x, &r, axis).unwrap();
            let report = grad_check(&[x, m], &[dx, dm], |p| {
                Ok(contract_axis(&p[0], &p[1], axis)?.dot(&r))
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-8, "{axis:?}: {report:?}");
        }
    }
}
