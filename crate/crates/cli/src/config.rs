//! The JSON run configuration.

use std::path::Path;

use dsthcn::hypergraph::SkeletonId;
use dsthcn::layers::model::{DEFAULT_KMEANS_CLUSTERS, DEFAULT_K_SPATIAL, DEFAULT_K_TEMPORAL};
use dsthcn::layers::{BlockSpec, ModelConfig};
use dsthcn::training::{StreamWeights, TrainConfig};
use dsthcn::{Error, Result};
use serde::{Deserialize, Serialize};

/// Architecture knobs. Input channels, class count, frame count and
/// skeleton come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub blocks: Vec<BlockSpec>,
    pub k_temporal: usize,
    pub k_spatial: usize,
    pub kmeans_clusters: usize,
    pub kmeans_seed: u64,
    pub residual: bool,
    pub input_norm: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            blocks: ModelConfig::default_blocks(),
            k_temporal: DEFAULT_K_TEMPORAL,
            k_spatial: DEFAULT_K_SPATIAL,
            kmeans_clusters: DEFAULT_KMEANS_CLUSTERS,
            kmeans_seed: 0,
            residual: true,
            input_norm: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Centre and scale every sample before deriving streams.
    pub preprocess: bool,
    /// Append adjacent-channel differences to the input.
    pub dual_correlation: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            preprocess: true,
            dual_correlation: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub streams: StreamWeights,
    pub data: DataSection,
    pub seed: u64,
}

impl RunConfig {
    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.streams.validate()?;
        let m = &self.model;
        if m.blocks.is_empty() {
            return Err(Error::Config("model.blocks must not be empty".into()));
        }
        if m.k_temporal == 0 || m.k_spatial == 0 || m.kmeans_clusters == 0 {
            return Err(Error::Config("neighbour and cluster counts must be positive".into()));
        }
        Ok(())
    }

    /// Full model configuration for data of the given extents.
    pub fn model_config(&self, skeleton: SkeletonId, in_channels: usize, num_classes: usize, frames: usize) -> Result<ModelConfig> {
        let m = &self.model;
        let cfg = ModelConfig {
            skeleton,
            in_channels,
            num_classes,
            frames,
            blocks: m.blocks.clone(),
            k_temporal: m.k_temporal,
            k_spatial: m.k_spatial,
            kmeans_clusters: m.kmeans_clusters,
            kmeans_seed: m.kmeans_seed,
            residual: m.residual,
            input_norm: m.input_norm,
        };
        cfg.block_configs()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Parses and validates a configuration. Unknown keys are rejected.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_run_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(parse_run_config("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.model.blocks = vec![BlockSpec::new(8, 1), BlockSpec::new(16, 2)];
        cfg.train.epochs = 7;
        cfg.seed = 42;
        assert_eq!(parse_run_config(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"sed": 1}"#,
            r#"{"train": {"lr": 0.1}}"#,
            r#"{"model": {"blocks": [{"channels": 8, "strides": 2}]}}"#,
        ] {
            assert!(matches!(parse_run_config(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            r#"{"model": {"blocks": []}}"#,
            r#"{"model": {"k_temporal": 0}}"#,
            r#"{"train": {"epochs": 3, "warmup_epochs": 3}}"#,
            r#"{"streams": {"joint": 0, "bone": 0, "joint_motion": 0, "bone_motion": 0}}"#,
            r#"{"streams": {"joint": -1}}"#,
        ] {
            assert!(matches!(parse_run_config(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn model_config_checks_data_extents() {
        let cfg = RunConfig::default();
        assert!(cfg.model_config(SkeletonId::Ntu25, 3, 60, 64).is_ok());
        // two stride-2 blocks leave one frame, below k_temporal
        assert!(cfg.model_config(SkeletonId::Ntu25, 3, 60, 4).is_err());
        assert!(cfg.model_config(SkeletonId::Ntu25, 3, 1, 64).is_err());
    }
}
