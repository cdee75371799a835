//! Synthetic action classes: the rest pose with class-specific joint
//! oscillations.

use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hypergraph::{SkeletonDefinition, SkeletonId};
use crate::tensor::Tensor;

use super::{Dataset, SkeletonSample};

/// Joints moved by each class.
const MOVING_JOINTS: usize = 4;
/// Oscillation amplitude relative to the mean bone length.
const AMPLITUDE: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Per-sample random phase, amplitude jitter and global offset.
    pub nuisance: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            noise: 0.01,
            nuisance: true,
        }
    }
}

/// What distinguishes one class from another.
#[derive(Clone, Debug)]
struct ClassPattern {
    joints: Vec<usize>,
    /// Cycles over the whole sequence, per moving joint.
    cycles: Vec<f64>,
    axis: Vec<usize>,
    phase: Vec<f64>,
}

impl ClassPattern {
    /// Depends only on the class index and joint count, never on the
    /// dataset seed, so train and validation files generated with
    /// different seeds share their classes.
    fn new(class: usize, joints: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_C1A5 ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let n = MOVING_JOINTS.min(joints);
        let mut picked = sample(&mut rng, joints, n).into_vec();
        picked.sort_unstable();
        ClassPattern {
            cycles: (0..n).map(|_| f64::from(rng.gen_range(1..=3u8))).collect(),
            axis: (0..n).map(|_| rng.gen_range(0..3)).collect(),
            phase: (0..n).map(|_| rng.gen_range(0.0..TAU)).collect(),
            joints: picked,
        }
    }
}

fn mean_rest_bone(sk: &SkeletonDefinition) -> f64 {
    let bones = sk.bones();
    if bones.is_empty() {
        return 1.0;
    }
    let r = sk.rest_pose();
    bones
        .iter()
        .map(|&(a, b)| (0..3).map(|k| (r[a][k] - r[b][k]).powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        / bones.len() as f64
}

/// `classes × per_class` three-channel sequences of `frames` frames,
/// ordered class by class. Values are rounded to `f32` so the dataset
/// survives an SKL round trip unchanged.
pub fn gen_synthetic(
    classes: usize,
    per_class: usize,
    frames: usize,
    skeleton: SkeletonId,
    seed: u64,
    opts: SynthOptions,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::input(format!("need at least 2 classes, got {classes}")));
    }
    if frames < 1 {
        return Err(Error::input("need at least one frame"));
    }
    if !(opts.noise >= 0.0 && opts.noise.is_finite()) {
        return Err(Error::input(format!("noise level {} must be finite and non-negative", opts.noise)));
    }
    let sk = skeleton
        .definition()
        .ok_or_else(|| Error::input("synthetic data needs a built-in skeleton"))?;
    let v = sk.num_joints();
    let rest = sk.rest_pose();
    let amp = AMPLITUDE * mean_rest_bone(&sk);
    let noise = Normal::new(0.0, opts.noise).map_err(|e| Error::input(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let pat = ClassPattern::new(class, v);
        for _ in 0..per_class {
            let (shift, gain, offset) = if opts.nuisance {
                (
                    rng.gen_range(0.0..TAU),
                    rng.gen_range(0.8..1.2),
                    [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
                )
            } else {
                (0.0, 1.0, [0.0; 3])
            };
            let mut x = Tensor::zeros(&[3, frames, v]);
            for t in 0..frames {
                let mut pose: Vec<[f64; 3]> = rest.to_vec();
                for (i, &j) in pat.joints.iter().enumerate() {
                    let angle = TAU * pat.cycles[i] * t as f64 / frames as f64 + pat.phase[i] + shift;
                    pose[j][pat.axis[i]] += gain * amp * angle.sin();
                }
                for (j, p) in pose.iter().enumerate() {
                    for ch in 0..3 {
                        let value = p[ch] + offset[ch] + noise.sample(&mut rng);
                        x.data_mut()[(ch * frames + t) * v + j] = f64::from(value as f32);
                    }
                }
            }
            samples.push(SkeletonSample { label: class, data: x });
        }
    }
    Dataset::new(skeleton, classes, samples)
}
