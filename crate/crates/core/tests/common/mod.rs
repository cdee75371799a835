#![allow(dead_code)]

use dsthcn::hypergraph::SkeletonDefinition;
use dsthcn::numcore::params::{named, named_mut, Params};
use dsthcn::Tensor;

/// Five joints: a spine 0-1-2 with arms 3 and 4 hanging off joint 1.
pub fn small_skeleton() -> SkeletonDefinition {
    SkeletonDefinition::new(
        vec![0, 0, 1, 1, 1],
        1,
        vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.1], [-1.0, 1.2, 0.0], [1.1, 1.0, 0.0]],
    )
    .unwrap()
}

pub fn flatten<P: Params>(p: &P) -> Vec<Tensor> {
    named(p).into_iter().map(|(_, t)| t.clone()).collect()
}

pub fn load<P: Params>(p: &mut P, values: &[Tensor]) {
    for ((_, dst), src) in named_mut(p).into_iter().zip(values) {
        *dst = src.clone();
    }
}
