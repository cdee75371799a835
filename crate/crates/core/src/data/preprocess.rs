//! Per-sample normalization: centre joint at the origin, unit mean bone
//! length in the first frame.

use crate::error::{Error, Result};
use crate::hypergraph::SkeletonDefinition;
use crate::tensor::Tensor;

use super::{Dataset, SkeletonSample};

/// Floor on the mean bone length used as the scale divisor.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Mean bone length of frame `t` over all channels.
fn mean_bone_length(x: &Tensor, sk: &SkeletonDefinition, t: usize) -> f64 {
    let (c, _, _) = x.dims3().expect("checked by caller");
    let bones = sk.bones();
    if bones.is_empty() {
        return 1.0;
    }
    let total: f64 = bones
        .iter()
        .map(|&(a, b)| {
            (0..c)
                .map(|ch| (x.at3(ch, t, a) - x.at3(ch, t, b)).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    total / bones.len() as f64
}

pub fn preprocess(sample: &SkeletonSample, sk: &SkeletonDefinition) -> Result<SkeletonSample> {
    let x = &sample.data;
    let (c, t, v) = x.dims3()?;
    if v != sk.num_joints() {
        return Err(Error::input(format!("sample has {v} joints, skeleton has {}", sk.num_joints())));
    }
    let centre = sk.center_joint();
    let mut out = x.clone();
    for ch in 0..c {
        for tt in 0..t {
            let row = &mut out.data_mut()[(ch * t + tt) * v..(ch * t + tt + 1) * v];
            let origin = row[centre];
            row.iter_mut().for_each(|p| *p -= origin);
        }
    }
    let scale = mean_bone_length(&out, sk, 0).max(SCALE_FLOOR);
    Ok(SkeletonSample {
        label: sample.label,
        data: out.scale(1.0 / scale),
    })
}

pub fn preprocess_dataset(d: &Dataset, sk: &SkeletonDefinition) -> Result<Dataset> {
    Ok(Dataset {
        skeleton: d.skeleton,
        num_classes: d.num_classes,
        samples: d.samples.iter().map(|s| preprocess(s, sk)).collect::<Result<_>>()?,
    })
}
