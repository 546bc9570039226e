//! Every command leaves behind one manifest: the resolved config, the
//! sha-256 of each file it read and wrote, and its headline metrics. A
//! manifest re-validated later proves the artifacts on disk are the ones
//! the experiment produced.

use std::collections::BTreeMap;
use std::path::Path;

use emtrace::write_atomic;
use emtrace::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// As given on the command line for inputs; relative to the manifest's
    /// directory for outputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub metrics: BTreeMap<String, f64>,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        offset: 0,
        source: e,
    })?;
    let mut h = Sha256::new();
    h.update(&bytes);
    let mut hex = String::with_capacity(64);
    for b in h.finalize() {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex,
        bytes: bytes.len() as u64,
    })
}

impl ExperimentManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
        }
    }

    /// Record an input. Inputs living under `dir` are stored relative to
    /// it, keeping manifests byte-identical across identically seeded runs
    /// in different directories; anything else keeps the path as supplied.
    pub fn push_input(&mut self, dir: &Path, path: &Path) -> Result<()> {
        let mut d = digest_file(path)?;
        if let (Ok(canon), Ok(base)) = (path.canonicalize(), dir.canonicalize()) {
            if let Ok(rel) = canon.strip_prefix(&base) {
                d.path = rel.display().to_string();
            }
        }
        self.inputs.push(d);
        Ok(())
    }

    /// Record an output living at `dir/name`, stored relative to `dir`.
    pub fn push_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let mut d = digest_file(&dir.join(name))?;
        d.path = name.to_string();
        self.outputs.push(d);
        Ok(())
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    /// Atomically write `dir/name` as pretty JSON.
    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(name), &bytes)
    }
}

pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        offset: 0,
        source: e,
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Recompute the digest of every recorded output (resolved against `dir`)
/// and fail on the first mismatch.
pub fn validate_manifest(dir: &Path, m: &ExperimentManifest) -> Result<()> {
    for rec in &m.outputs {
        let now = digest_file(&dir.join(&rec.path))?;
        if now.sha256 != rec.sha256 || now.bytes != rec.bytes {
            return Err(Error::BadConfig {
                detail: format!("digest mismatch for {}", rec.path),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("out.bin"), b"payload").unwrap();

        let cfg = ExperimentConfig::default();
        let mut m = ExperimentManifest::new("demo", &cfg);
        m.push_output(dir.path(), "out.bin").unwrap();
        m.metric("accuracy", 0.75);
        m.write(dir.path(), "demo.manifest.json").unwrap();

        let back = load_manifest(&dir.path().join("demo.manifest.json")).unwrap();
        assert_eq!(back, m);
        validate_manifest(dir.path(), &back).unwrap();

        std::fs::write(dir.path().join("out.bin"), b"tampered").unwrap();
        assert!(validate_manifest(dir.path(), &back).is_err());
    }

    #[test]
    fn digest_is_stable_for_equal_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        std::fs::write(&a, b"same").unwrap();
        std::fs::write(&b, b"same").unwrap();
        assert_eq!(digest_file(&a).unwrap().sha256, digest_file(&b).unwrap().sha256);
        assert_eq!(digest_file(&a).unwrap().bytes, 4);
    }
}
