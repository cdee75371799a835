//! The five-feature bundle and its high-order fusion.

use crate::error::{Error, Result};
use crate::numcore::{pointwise_channel_map, pointwise_channel_map_backward, sigmoid, Axis};
use crate::tensor::Tensor;

use super::conv::{graph_conv, hyper_conv, GraphConvParams, Projection};

/// Smallest magnitude the fusion divisor may take.
pub const BETA_FLOOR: f64 = 1e-3;

/// Initial value of every learned fusion divisor.
pub const BETA_INIT: f64 = 2.0;

/// `A′..E′`: spatial, time-point, skeleton-graph and the two cross
/// features, all `C×T×V`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBundle {
    pub a: Tensor,
    pub b: Tensor,
    pub c: Tensor,
    pub d: Tensor,
    pub e: Tensor,
}

impl FeatureBundle {
    fn check(&self) -> Result<()> {
        let s = self.a.shape();
        if [&self.b, &self.c, &self.d, &self.e].iter().any(|t| t.shape() != s) {
            return Err(Error::dim("feature bundle members differ in shape"));
        }
        self.a.dims3()?;
        Ok(())
    }
}

/// Structural operators for one bundle evaluation. `spatial` and `tph`
/// are normalized operators applied in their symmetrized form; `st`
/// and `ts` are the normalized cross operators.
#[derive(Clone, Copy, Debug)]
pub struct BundleOperators<'a> {
    pub spatial: &'a Tensor,
    pub tph: &'a Tensor,
    pub st: &'a Tensor,
    pub ts: &'a Tensor,
    pub partitions: &'a [Tensor],
}

#[derive(Clone, Copy, Debug)]
pub struct BundleThetas<'a> {
    pub a: &'a Projection,
    pub b: &'a Projection,
    pub graph: &'a GraphConvParams,
    pub d: &'a Projection,
    pub e: &'a Projection,
}

pub fn compute_bundle(x: &Tensor, ops: BundleOperators<'_>, thetas: BundleThetas<'_>) -> Result<FeatureBundle> {
    let bundle = FeatureBundle {
        a: hyper_conv(x, ops.spatial, thetas.a, Axis::Vertex, true)?,
        b: hyper_conv(x, ops.tph, thetas.b, Axis::Time, true)?,
        c: graph_conv(x, ops.partitions, thetas.graph)?.0,
        d: hyper_conv(x, ops.st, thetas.d, Axis::Vertex, false)?,
        e: hyper_conv(x, ops.ts, thetas.e, Axis::Time, false)?,
    };
    bundle.check()?;
    Ok(bundle)
}

/// `sign(β)·max(|β|, BETA_FLOOR)`, with `sign(0) = +1`.
pub fn effective_beta(beta: f64) -> f64 {
    let m = beta.abs().max(BETA_FLOOR);
    if beta < 0.0 {
        -m
    } else {
        m
    }
}

fn scalar_of(beta: &Tensor) -> Result<f64> {
    match beta.data() {
        [b] => Ok(*b),
        _ => Err(Error::dim(format!("beta must hold one value, got shape {:?}", beta.shape()))),
    }
}

/// `[Y1; Y2; Y3]` stacked along channels, with
/// `Y1 = A′⊙σ(B′)`, `Y2 = (A′ + C′)/β`, `Y3 = D′ + E′`.
pub fn hif_concat(bundle: &FeatureBundle, beta: &Tensor) -> Result<Tensor> {
    bundle.check()?;
    let beta = effective_beta(scalar_of(beta)?);
    let (c, t, v) = bundle.a.dims3()?;
    let n = c * t * v;
    let mut out = Tensor::zeros(&[3 * c, t, v]);
    let (y1, rest) = out.data_mut().split_at_mut(n);
    let (y2, y3) = rest.split_at_mut(n);
    let (a, b, gc, d, e) = (
        bundle.a.data(),
        bundle.b.data(),
        bundle.c.data(),
        bundle.d.data(),
        bundle.e.data(),
    );
    for i in 0..n {
        y1[i] = a[i] * sigmoid(b[i]);
        y2[i] = (a[i] + gc[i]) / beta;
        y3[i] = d[i] + e[i];
    }
    Ok(out)
}

/// Adjoint of [`hif_concat`]; returns the bundle gradient and `dβ`.
pub fn hif_concat_backward(bundle: &FeatureBundle, beta: &Tensor, grad: &Tensor) -> Result<(FeatureBundle, Tensor)> {
    let raw = scalar_of(beta)?;
    let beff = effective_beta(raw);
    let (c, t, v) = bundle.a.dims3()?;
    if grad.shape() != [3 * c, t, v] {
        return Err(Error::dim("fusion gradient shape mismatch"));
    }
    let n = c * t * v;
    let g = grad.data();
    let (g1, g2, g3) = (&g[..n], &g[n..2 * n], &g[2 * n..]);
    let mut out = FeatureBundle {
        a: bundle.a.zeros_like(),
        b: bundle.a.zeros_like(),
        c: bundle.a.zeros_like(),
        d: bundle.a.zeros_like(),
        e: bundle.a.zeros_like(),
    };
    let mut dbeta_eff = 0.0;
    let (a, b, gc) = (bundle.a.data(), bundle.b.data(), bundle.c.data());
    for i in 0..n {
        let s = sigmoid(b[i]);
        out.a.data_mut()[i] = g1[i] * s + g2[i] / beff;
        out.b.data_mut()[i] = g1[i] * a[i] * s * (1.0 - s);
        out.c.data_mut()[i] = g2[i] / beff;
        out.d.data_mut()[i] = g3[i];
        out.e.data_mut()[i] = g3[i];
        dbeta_eff -= g2[i] * (a[i] + gc[i]) / (beff * beff);
    }
    let dbeta = if raw.abs() > BETA_FLOOR { dbeta_eff } else { 0.0 };
    Ok((out, Tensor::scalar(dbeta)))
}

/// Fuses a bundle into `C_out` channels. `graph_feature` replaces `C′`
/// in the averaging term.
pub fn hif_fuse(bundle: &FeatureBundle, graph_feature: &Tensor, beta: &Tensor, mixer: &Projection) -> Result<Tensor> {
    let b = FeatureBundle {
        c: graph_feature.clone(),
        ..bundle.clone()
    };
    mixer.apply(&hif_concat(&b, beta)?)
}

/// Gradients of [`hif_fuse`]: bundle (with `c` holding the graph feature
/// gradient), `β` and the mixer.
pub fn hif_fuse_backward(
    bundle: &FeatureBundle,
    graph_feature: &Tensor,
    beta: &Tensor,
    mixer: &Projection,
    grad: &Tensor,
) -> Result<(FeatureBundle, Tensor, Projection)> {
    let b = FeatureBundle {
        c: graph_feature.clone(),
        ..bundle.clone()
    };
    let cat = hif_concat(&b, beta)?;
    let g = pointwise_channel_map_backward(&cat, &mixer.weight, grad)?;
    let (db, dbeta) = hif_concat_backward(&b, beta, &g.input)?;
    Ok((
        db,
        dbeta,
        Projection {
            weight: g.weight,
            bias: g.bias,
        },
    ))
}

/// Mixer applied to a sum of `n` concatenated fusions: `W·Σcat + n·b`,
/// equal to summing `n` separate fusions.
pub(crate) fn mix_sum(cat_sum: &Tensor, mixer: &Projection, n: usize) -> Result<Tensor> {
    let bias = mixer.bias.scale(n as f64);
    pointwise_channel_map(cat_sum, &mixer.weight, Some(&bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gradcheck::{grad_check, random_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bundle(rng: &mut ChaCha8Rng, shape: &[usize]) -> FeatureBundle {
        FeatureBundle {
            a: random_tensor(rng, shape),
            b: random_tensor(rng, shape),
            c: random_tensor(rng, shape),
            d: random_tensor(rng, shape),
            e: random_tensor(rng, shape),
        }
    }

    fn split(cat: &Tensor) -> Vec<Vec<f64>> {
        let n = cat.len() / 3;
        cat.data().chunks(n).map(<[f64]>::to_vec).collect()
    }

    #[test]
    fn beta_two_averages_equal_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut bundle = random_bundle(&mut rng, &[2, 3, 4]);
        bundle.c = bundle.a.clone();
        let cat = hif_concat(&bundle, &Tensor::scalar(2.0)).unwrap();
        let ys = split(&cat);
        for (y2, a) in ys[1].iter().zip(bundle.a.data()) {
            assert!((y2 - a).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gate_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut bundle = random_bundle(&mut rng, &[2, 3, 4]);
        bundle.b.fill(0.0);
        let cat = hif_concat(&bundle, &Tensor::scalar(2.0)).unwrap();
        let ys = split(&cat);
        for (y1, a) in ys[0].iter().zip(bundle.a.data()) {
            assert_eq!(*y1, 0.5 * a);
        }
    }

    #[test]
    fn fuse_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (c, t, v, co) = (2, 3, 4, 3);
        let bundle = random_bundle(&mut rng, &[c, t, v]);
        let gf = random_tensor(&mut rng, &[c, t, v]);
        let mixer = Projection {
            weight: random_tensor(&mut rng, &[3 * c, co]),
            bias: random_tensor(&mut rng, &[co]),
        };
        let beta = 1.7;
        let out = hif_fuse(&bundle, &gf, &Tensor::scalar(beta), &mixer).unwrap();
        for o in 0..co {
            for tt in 0..t {
                for vv in 0..v {
                    let mut want = mixer.bias.data()[o];
                    for ch in 0..c {
                        let a = bundle.a.at3(ch, tt, vv);
                        let y1 = a / (1.0 + (-bundle.b.at3(ch, tt, vv)).exp());
                        let y2 = (a + gf.at3(ch, tt, vv)) / beta;
                        let y3 = bundle.d.at3(ch, tt, vv) + bundle.e.at3(ch, tt, vv);
                        want += y1 * mixer.weight.at2(ch, o)
                            + y2 * mixer.weight.at2(c + ch, o)
                            + y3 * mixer.weight.at2(2 * c + ch, o);
                    }
                    assert!((out.at3(o, tt, vv) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn beta_guard() {
        assert_eq!(effective_beta(2.0), 2.0);
        assert_eq!(effective_beta(-0.5), -0.5);
        assert_eq!(effective_beta(0.0), BETA_FLOOR);
        assert_eq!(effective_beta(-1e-9), -BETA_FLOOR);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let bundle = random_bundle(&mut rng, &[1, 2, 2]);
        let cat = hif_concat(&bundle, &Tensor::scalar(0.0)).unwrap();
        cat.check_finite("fusion").unwrap();
    }

    #[test]
    fn bundle_shape_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut bundle = random_bundle(&mut rng, &[1, 2, 2]);
        bundle.e = Tensor::zeros(&[1, 2, 3]);
        assert!(matches!(hif_concat(&bundle, &Tensor::scalar(2.0)), Err(Error::Dimension(_))));
    }

    #[test]
    fn identity_bundle() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let x = random_tensor(&mut rng, &[2, 3, 4]);
        let id = Projection::identity(2);
        let graph = GraphConvParams {
            weights: vec![Tensor::identity(2)],
            bias: Tensor::zeros(&[2]),
        };
        let (it, iv) = (Tensor::identity(3), Tensor::identity(4));
        let ops = BundleOperators {
            spatial: &iv,
            tph: &it,
            st: &iv,
            ts: &it,
            partitions: std::slice::from_ref(&iv),
        };
        let th = BundleThetas {
            a: &id,
            b: &id,
            graph: &graph,
            d: &id,
            e: &id,
        };
        let b = compute_bundle(&x, ops, th).unwrap();
        let two = x.scale(2.0);
        assert!(b.a.max_abs_diff(&two) < 1e-15 && b.b.max_abs_diff(&two) < 1e-15);
        assert_eq!(b.c, x);
        assert_eq!(b.d, x);
        assert_eq!(b.e, x);

        let zero = compute_bundle(&x.zeros_like(), ops, th).unwrap();
        for t in [&zero.a, &zero.b, &zero.c, &zero.d, &zero.e] {
            assert!(t.data().iter().all(|&z| z == 0.0));
        }
    }

    #[test]
    fn fuse_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for &(c, co, t, v) in &[(1, 1, 2, 2), (2, 3, 3, 4), (3, 2, 2, 5), (2, 2, 4, 3), (4, 1, 3, 3)] {
            let bundle = random_bundle(&mut rng, &[c, t, v]);
            let gf = random_tensor(&mut rng, &[c, t, v]);
            let mixer = Projection {
                weight: random_tensor(&mut rng, &[3 * c, co]),
                bias: random_tensor(&mut rng, &[co]),
            };
            let beta = Tensor::scalar(0.5 + rng.gen::<f64>() * 2.0);
            let r = random_tensor(&mut rng, &[co, t, v]);
            let (db, dbeta, dm) = hif_fuse_backward(&bundle, &gf, &beta, &mixer, &r).unwrap();
            let inputs = vec![
                bundle.a.clone(),
                bundle.b.clone(),
                gf.clone(),
                bundle.d.clone(),
                bundle.e.clone(),
                beta.clone(),
                mixer.weight.clone(),
                mixer.bias.clone(),
            ];
            let analytic = vec![db.a, db.b, db.c, db.d, db.e, dbeta, dm.weight, dm.bias];
            let rep = grad_check(&inputs, &analytic, |p| {
                let b = FeatureBundle {
                    a: p[0].clone(),
                    b: p[1].clone(),
                    c: Tensor::zeros(p[0].shape()),
                    d: p[3].clone(),
                    e: p[4].clone(),
                };
                let m = Projection { weight: p[6].clone(), bias: p[7].clone() };
                Ok(hif_fuse(&b, &p[2], &p[5], &m)?.dot(&r))
            })
            .unwrap();
            assert!(rep.max_rel_error < 1e-4, "{rep:?}");
        }
    }
}
