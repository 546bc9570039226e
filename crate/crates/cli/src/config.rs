//! One JSON document controls an experiment. Every field has a default,
//! a partial config file overrides only what it names, and the fully
//! resolved struct is copied into each manifest so an archived experiment
//! never depends on what the defaults were at the time.

use std::path::Path;

use emtrace::emusim::Scenario;
use emtrace::neuralnet::TrainConfig;
use emtrace::spectral::StftConfig;
use emtrace::{Error, Result};
use serde::{Deserialize, Serialize};

/// How cross-device evaluation normalizes the target dataset.
///
/// `RefitTarget` fits a fresh min-max scaler on the full target dataset,
/// mirroring a workflow where each device's capture is normalized on its
/// own. `ReuseTrain` applies the scaler fitted on the source device's
/// training split, which requires shipping the scaler file along with the
/// model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalerPolicy {
    #[default]
    RefitTarget,
    ReuseTrain,
}

/// Fully resolved experiment parameters.
///
/// Defaults are the desk-scale profile: a 256-bin grid, 2,000 frames per
/// class, and a six-hidden-layer network sized to train in seconds on one
/// core. The full-scale profile (4,096-bin grid, 30,000-frame cap,
/// hidden dims from `neuralnet::DEFAULT_HIDDEN_DIMS`) is reached by
/// overriding `stft`, `per_class_cap`, and `hidden_dims` in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Drives the scenario, the splits, weight init, and
    /// shuffling; `train.seed` is overwritten with this value when the
    /// config is resolved.
    pub seed: u64,
    /// Scenario generated by `scenario` and named in its manifest.
    pub scenario: Option<Scenario>,
    pub stft: StftConfig,
    /// Per-class row cap applied while featurizing, and the per-class
    /// frame count when generating a scenario.
    pub per_class_cap: usize,
    /// Train fraction of the stratified split.
    pub split_fraction: f64,
    pub train: TrainConfig,
    pub hidden_dims: Vec<usize>,
    /// Width of the new hidden layer a transfer model inserts.
    pub transfer_dim: usize,
    pub scaler_policy: ScalerPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            scenario: Some(Scenario::Dragon2Dev4Act),
            stft: StftConfig {
                fft_size: 256,
                overlap: 32,
                ..StftConfig::default()
            },
            per_class_cap: 2000,
            split_fraction: 0.7,
            train: TrainConfig {
                batch_size: 64,
                learning_rate: 0.005,
                seed: 42,
                ..TrainConfig::default()
            },
            hidden_dims: vec![64, 48, 32, 24, 16, 12],
            transfer_dim: 32,
            scaler_policy: ScalerPolicy::RefitTarget,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.train.validate()?;
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::BadConfig {
                detail: format!("split_fraction {} not in (0, 1)", self.split_fraction),
            });
        }
        if self.per_class_cap == 0 {
            return Err(Error::BadConfig {
                detail: "per_class_cap must be at least 1".into(),
            });
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::BadConfig {
                detail: "hidden_dims must be non-empty with positive widths".into(),
            });
        }
        if self.transfer_dim == 0 {
            return Err(Error::BadConfig {
                detail: "transfer_dim must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Resolve the effective config: defaults, overlaid with an optional JSON
/// file, overlaid with an optional seed flag. The one seed then feeds
/// every seeded stage.
pub fn load_config(path: Option<&Path>, seed_flag: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::Io {
                offset: 0,
                source: e,
            })?;
            serde_json::from_slice(&bytes)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}
