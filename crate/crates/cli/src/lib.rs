//! Experiment orchestration for the emtrace toolkit: a JSON experiment
//! config with materialized defaults, per-command manifests with file
//! digests, and the canonical same-device / cross-device / transfer
//! recipes as library functions the `emtrace` binary dispatches to.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::{ExperimentConfig, ScalerPolicy};
pub use manifest::{ExperimentManifest, FileDigest};
