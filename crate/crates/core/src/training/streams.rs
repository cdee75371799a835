//! Joint, bone and motion input streams, the dual-correlation channel
//! augmentation, and weighted score fusion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{preprocess as preprocess_sample, Dataset, SkeletonSample};
use crate::error::{Error, Result};
use crate::hypergraph::SkeletonDefinition;
use crate::numcore::argmax;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamKind {
    Joint,
    Bone,
    JointMotion,
    BoneMotion,
}

impl StreamKind {
    pub const ALL: [StreamKind; 4] = [StreamKind::Joint, StreamKind::Bone, StreamKind::JointMotion, StreamKind::BoneMotion];

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Joint => "joint",
            StreamKind::Bone => "bone",
            StreamKind::JointMotion => "joint-motion",
            StreamKind::BoneMotion => "bone-motion",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::input(format!("unknown stream '{s}'")))
    }
}

/// Fusion weight per stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamWeights {
    pub joint: f64,
    pub bone: f64,
    pub joint_motion: f64,
    pub bone_motion: f64,
}

impl Default for StreamWeights {
    fn default() -> Self {
        StreamWeights {
            joint: 0.6,
            bone: 0.6,
            joint_motion: 0.4,
            bone_motion: 0.4,
        }
    }
}

impl StreamWeights {
    pub fn get(&self, kind: StreamKind) -> f64 {
        match kind {
            StreamKind::Joint => self.joint,
            StreamKind::Bone => self.bone,
            StreamKind::JointMotion => self.joint_motion,
            StreamKind::BoneMotion => self.bone_motion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = StreamKind::ALL.map(|k| self.get(k));
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("stream weights must be non-negative and not all zero".into()));
        }
        Ok(())
    }
}

fn bones(x: &Tensor, sk: &SkeletonDefinition) -> Result<Tensor> {
    let (c, t, v) = x.dims3()?;
    if v != sk.num_joints() {
        return Err(Error::input(format!("sample has {v} joints, skeleton has {}", sk.num_joints())));
    }
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        for tt in 0..t {
            let base = (ch * t + tt) * v;
            for j in 0..v {
                let p = sk.parent(j);
                if p != j {
                    out.data_mut()[base + j] = x.data()[base + j] - x.data()[base + p];
                }
            }
        }
    }
    Ok(out)
}

/// Frame differences `x[t+1] − x[t]`; the last frame is zero.
fn motion(x: &Tensor) -> Result<Tensor> {
    let (c, t, v) = x.dims3()?;
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        for tt in 0..t.saturating_sub(1) {
            for j in 0..v {
                let i = (ch * t + tt) * v + j;
                out.data_mut()[i] = x.data()[i + v] - x.data()[i];
            }
        }
    }
    Ok(out)
}

pub fn derive_stream(joint: &SkeletonSample, sk: &SkeletonDefinition, kind: StreamKind) -> Result<SkeletonSample> {
    let data = match kind {
        StreamKind::Joint => joint.data.clone(),
        StreamKind::Bone => bones(&joint.data, sk)?,
        StreamKind::JointMotion => motion(&joint.data)?,
        StreamKind::BoneMotion => motion(&bones(&joint.data, sk)?)?,
    };
    Ok(SkeletonSample {
        label: joint.label,
        data,
    })
}

/// All four streams, in [`StreamKind::ALL`] order.
pub fn derive_streams(joint: &SkeletonSample, sk: &SkeletonDefinition) -> Result<Vec<(StreamKind, SkeletonSample)>> {
    StreamKind::ALL
        .into_iter()
        .map(|k| Ok((k, derive_stream(joint, sk, k)?)))
        .collect()
}

/// Appends the adjacent-channel differences `x_c − x_{c+1}`.
pub fn dual_correlation_channels(s: &SkeletonSample) -> Result<SkeletonSample> {
    let (c, t, v) = s.data.dims3()?;
    if c < 2 {
        return Err(Error::input(format!("dual correlation needs at least 2 channels, got {c}")));
    }
    let plane = t * v;
    let mut data = s.data.data().to_vec();
    for ch in 0..c - 1 {
        let (a, b) = (&s.data.data()[ch * plane..(ch + 1) * plane], &s.data.data()[(ch + 1) * plane..(ch + 2) * plane]);
        data.extend(a.iter().zip(b).map(|(x, y)| x - y));
    }
    Ok(SkeletonSample {
        label: s.label,
        data: Tensor::new(&[2 * c - 1, t, v], data)?,
    })
}

/// Model input for one stream: optional normalization, stream derivation,
/// then optional dual-correlation channels.
pub fn prepare_dataset(d: &Dataset, kind: StreamKind, preprocess: bool, dual_correlation: bool) -> Result<Dataset> {
    let sk = d
        .skeleton
        .definition()
        .ok_or_else(|| Error::input("streams need a built-in skeleton"))?;
    let samples = d
        .samples
        .iter()
        .map(|s| {
            let s = if preprocess { preprocess_sample(s, &sk)? } else { s.clone() };
            let s = derive_stream(&s, &sk, kind)?;
            if dual_correlation {
                dual_correlation_channels(&s)
            } else {
                Ok(s)
            }
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        skeleton: d.skeleton,
        num_classes: d.num_classes,
        samples,
    })
}

/// `fused[b,k] = Σ_s w_s·scores_s[b,k]` and the per-row argmax (ties to
/// the smaller class).
pub fn fuse_scores(scores: &[Tensor], weights: &[f64]) -> Result<(Tensor, Vec<usize>)> {
    let first = scores.first().ok_or_else(|| Error::input("no score tables to fuse"))?;
    if scores.len() != weights.len() {
        return Err(Error::input(format!("{} score tables but {} weights", scores.len(), weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().all(|&w| w == 0.0) {
        return Err(Error::input("fusion weights must be non-negative and not all zero"));
    }
    let (b, k) = first.dims2()?;
    let mut fused = Tensor::zeros(&[b, k]);
    for (s, &w) in scores.iter().zip(weights) {
        if s.shape() != first.shape() {
            return Err(Error::input(format!("score shapes differ: {:?} vs {:?}", s.shape(), first.shape())));
        }
        fused.add_assign(&s.scale(w))?;
    }
    let preds = if k == 0 { vec![0; b] } else { fused.data().chunks(k).map(argmax).collect() };
    Ok((fused, preds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_joint() -> SkeletonDefinition {
        SkeletonDefinition::new(vec![0, 0], 0, vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn hand_computed_streams() {
        // C=1, T=2, V=2: frame 0 = [1, 4], frame 1 = [2, 7]
        let s = SkeletonSample {
            label: 3,
            data: Tensor::new(&[1, 2, 2], vec![1., 4., 2., 7.]).unwrap(),
        };
        let all = derive_streams(&s, &two_joint()).unwrap();
        let get = |k| all.iter().find(|(kk, _)| *kk == k).unwrap().1.data.data().to_vec();
        assert_eq!(get(StreamKind::Joint), vec![1., 4., 2., 7.]);
        assert_eq!(get(StreamKind::Bone), vec![0., 3., 0., 5.]);
        assert_eq!(get(StreamKind::JointMotion), vec![1., 3., 0., 0.]);
        assert_eq!(get(StreamKind::BoneMotion), vec![0., 2., 0., 0.]);
        assert!(all.iter().all(|(_, x)| x.label == 3));
    }

    #[test]
    fn static_pose_has_no_motion() {
        let s = SkeletonSample {
            label: 0,
            data: Tensor::new(&[1, 3, 2], vec![1., 2., 1., 2., 1., 2.]).unwrap(),
        };
        for k in [StreamKind::JointMotion, StreamKind::BoneMotion] {
            assert!(derive_stream(&s, &two_joint(), k).unwrap().data.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn dual_correlation() {
        let s = SkeletonSample {
            label: 0,
            data: Tensor::new(&[3, 1, 2], vec![1., 2., 4., 8., 16., 32.]).unwrap(),
        };
        let d = dual_correlation_channels(&s).unwrap();
        assert_eq!(d.data.shape(), &[5, 1, 2]);
        assert_eq!(&d.data.data()[6..], &[-3., -6., -12., -24.]);
        let one = SkeletonSample {
            label: 0,
            data: Tensor::zeros(&[1, 1, 2]),
        };
        assert!(matches!(dual_correlation_channels(&one), Err(Error::Input(_))));
    }

    #[test]
    fn two_class_fusion_by_hand() {
        let a = Tensor::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.1, 0.9], vec![0.6, 0.4]]).unwrap();
        let (fused, preds) = fuse_scores(&[a.clone(), b.clone()], &[0.6, 0.4]).unwrap();
        // row 0: 0.46 vs 0.54; row 1: 0.36 vs 0.64
        assert!((fused.at2(0, 0) - 0.46).abs() < 1e-12 && (fused.at2(0, 1) - 0.54).abs() < 1e-12);
        assert_eq!(preds, vec![1, 1]);
        assert!(fuse_scores(&[a.clone(), Tensor::zeros(&[3, 2])], &[1.0, 1.0]).is_err());
        assert!(fuse_scores(std::slice::from_ref(&a), &[0.0]).is_err());
        assert!(fuse_scores(&[a], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn stream_names() {
        for k in StreamKind::ALL {
            assert_eq!(k.name().parse::<StreamKind>().unwrap(), k);
        }
        assert!("hand".parse::<StreamKind>().is_err());
    }
}
