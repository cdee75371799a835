//! Skeleton sequences, the SKL container format, normalization and a
//! synthetic dataset generator.

pub mod export;
pub mod preprocess;
pub mod skl;
pub mod synthetic;

pub use export::{feature_csv, write_feature_csv};
pub use preprocess::{preprocess, preprocess_dataset};
pub use skl::{decode_skl, encode_skl, read_skl, write_skl, SKL_MAGIC, SKL_VERSION};
pub use synthetic::{gen_synthetic, SynthOptions};

use crate::error::{Error, Result};
use crate::hypergraph::SkeletonId;
use crate::tensor::Tensor;

/// One labelled `C×T×V` sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSample {
    pub label: usize,
    pub data: Tensor,
}

impl SkeletonSample {
    pub fn new(label: usize, data: Tensor) -> Result<Self> {
        let (_, t, _) = data.dims3()?;
        if t < 1 {
            return Err(Error::input("a sample needs at least one frame"));
        }
        data.check_finite("sample")?;
        Ok(SkeletonSample { label, data })
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn joints(&self) -> usize {
        self.data.shape()[2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub skeleton: SkeletonId,
    pub num_classes: usize,
    pub samples: Vec<SkeletonSample>,
}

impl Dataset {
    pub fn new(skeleton: SkeletonId, num_classes: usize, samples: Vec<SkeletonSample>) -> Result<Self> {
        let d = Dataset {
            skeleton,
            num_classes,
            samples,
        };
        d.validate()?;
        Ok(d)
    }

    /// Labels below the class count, one joint count, and the built-in
    /// skeleton's joint count where there is one.
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.samples.iter().find(|s| s.label >= self.num_classes) {
            return Err(Error::input(format!("label {} outside {} classes", s.label, self.num_classes)));
        }
        let want = self
            .skeleton
            .definition()
            .map(|d| d.num_joints())
            .or_else(|| self.samples.first().map(SkeletonSample::joints));
        if let Some(v) = want {
            if let Some(s) = self.samples.iter().find(|s| s.joints() != v) {
                return Err(Error::input(format!("sample has {} joints, expected {v}", s.joints())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.samples.iter().map(|s| s.data.clone()).collect()
    }

    /// Deterministic per-class split: within each class, the first
    /// `train_per_class` samples in file order go to the first set.
    pub fn split_per_class(&self, train_per_class: usize) -> (Dataset, Dataset) {
        let mut seen = vec![0usize; self.num_classes];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for s in &self.samples {
            let n = &mut seen[s.label];
            if *n < train_per_class {
                a.push(s.clone());
            } else {
                b.push(s.clone());
            }
            *n += 1;
        }
        let wrap = |samples| Dataset {
            skeleton: self.skeleton,
            num_classes: self.num_classes,
            samples,
        };
        (wrap(a), wrap(b))
    }
}
