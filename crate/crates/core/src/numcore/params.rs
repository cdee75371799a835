//! Named parameter trees.
//!
//! Every layer stores its learned tensors in a plain struct that
//! implements [`Params`]; gradients use the same struct type, so values
//! and gradients can be paired by visiting both in the same order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub trait Params {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Params for Tensor {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(prefix.to_string(), self)
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(prefix.to_string(), self)
    }
}

impl<T: Params> Params for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

impl<T: Params> Params for Option<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        if let Some(p) = self {
            p.visit(prefix, f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        if let Some(p) = self {
            p.visit_mut(prefix, f);
        }
    }
}

/// Implements [`Params`] for a struct by visiting the listed fields in
/// order, each under its own field name.
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::numcore::params::Params for $ty {
            fn visit<'a>(
                &'a self,
                prefix: &str,
                f: &mut dyn FnMut(String, &'a $crate::tensor::Tensor),
            ) {
                $( $crate::numcore::params::Params::visit(&self.$field, &$crate::numcore::params::join(prefix, stringify!($field)), f); )*
            }

            fn visit_mut<'a>(
                &'a mut self,
                prefix: &str,
                f: &mut dyn FnMut(String, &'a mut $crate::tensor::Tensor),
            ) {
                $( $crate::numcore::params::Params::visit_mut(&mut self.$field, &$crate::numcore::params::join(prefix, stringify!($field)), f); )*
            }
        }
    };
}
pub(crate) use impl_params;

pub fn named<P: Params + ?Sized>(p: &P) -> Vec<(String, &Tensor)> {
    let mut out = Vec::new();
    p.visit("", &mut |name, t| out.push((name, t)));
    out
}

pub fn named_mut<P: Params + ?Sized>(p: &mut P) -> Vec<(String, &mut Tensor)> {
    let mut out = Vec::new();
    p.visit_mut("", &mut |name, t| out.push((name, t)));
    out
}

/// Total number of scalar parameters.
pub fn param_count<P: Params + ?Sized>(p: &P) -> usize {
    named(p).iter().map(|(_, t)| t.len()).sum()
}

pub fn zeros_like<P: Params + Clone>(p: &P) -> P {
    let mut z = p.clone();
    z.visit_mut("", &mut |_, t| t.fill(0.0));
    z
}

/// `acc += other`, pairing tensors by visit order.
pub fn accumulate<P: Params>(acc: &mut P, other: &P) -> Result<()> {
    let src = named(other);
    let dst = named_mut(acc);
    if src.len() != dst.len() {
        return Err(Error::dim("parameter trees differ in size"));
    }
    for ((_, d), (_, s)) in dst.into_iter().zip(src) {
        d.add_assign(s)?;
    }
    Ok(())
}

/// A learned tensor paired with its gradient, as handed to the
/// optimizer.
#[derive(Debug)]
pub struct GradRecord<'a> {
    pub path: String,
    pub value: &'a mut Tensor,
    pub grad: &'a Tensor,
}

impl GradRecord<'_> {
    /// Batch-norm affine terms and the fusion divisor are exempt from
    /// weight decay.
    pub fn decays(&self) -> bool {
        !matches!(self.path.rsplit('.').next(), Some("gamma" | "shift" | "beta"))
    }
}

/// Pairs every value with the gradient at the same path.
pub fn grad_records<'a, P: Params>(values: &'a mut P, grads: &'a P) -> Result<Vec<GradRecord<'a>>> {
    let g = named(grads);
    let v = named_mut(values);
    if g.len() != v.len() {
        return Err(Error::dim("value and gradient trees differ in size"));
    }
    v.into_iter()
        .zip(g)
        .map(|((path, value), (gpath, grad))| {
            if path != gpath || value.shape() != grad.shape() {
                return Err(Error::dim(format!("gradient for {path} does not match ({gpath})")));
            }
            Ok(GradRecord { path, value, grad })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Lin {
        weight: Tensor,
        bias: Tensor,
    }
    impl_params!(Lin { weight, bias });

    #[derive(Clone)]
    struct Net {
        layers: Vec<Lin>,
        extra: Option<Tensor>,
    }
    impl_params!(Net { layers, extra });

    fn net() -> Net {
        let lin = Lin {
            weight: Tensor::zeros(&[3, 4]),
            bias: Tensor::zeros(&[4]),
        };
        Net {
            layers: vec![lin.clone(), lin],
            extra: None,
        }
    }

    #[test]
    fn names_and_count() {
        let n = net();
        let names: Vec<String> = named(&n).into_iter().map(|(s, _)| s).collect();
        assert_eq!(names, ["layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"]);
        assert_eq!(param_count(&n.layers[0]), 16);
        assert_eq!(param_count(&Vec::<Lin>::new()), 0);
    }

    #[test]
    fn accumulate_and_records() {
        let mut a = net();
        let mut b = zeros_like(&a);
        b.layers[1].bias.fill(2.0);
        accumulate(&mut a, &b).unwrap();
        assert_eq!(a.layers[1].bias.data(), &[2.0; 4]);
        let recs = grad_records(&mut a, &b).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs[0].decays());
    }

    #[test]
    fn decay_exemptions() {
        let mut t = Tensor::zeros(&[1]);
        let g = Tensor::zeros(&[1]);
        for (path, decays) in [("stem.gamma", false), ("blocks.0.bn.shift", false), ("blocks.0.topo.1.beta", false), ("head.weight", true)] {
            let r = GradRecord { path: path.into(), value: &mut t, grad: &g };
            assert_eq!(r.decays(), decays, "{path}");
        }
    }
}
