//! Labeled feature datasets: assembly under a per-class cap, stratified
//! splitting, min-max scaling, and the "EMDS" persistence format.
//!
//! Assembly is deterministic: frames are accepted in push order (source
//! order, then frame order within a source) until each class reaches the
//! cap. Randomness enters only at split time, seeded.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::num::Real;
use crate::spectral::FeatureVector;
use crate::wire;

const MAGIC: &[u8; 4] = b"EMDS";
const VERSION: u16 = 1;
/// Upper bound on a stored class-name length; larger values mean corruption.
const MAX_NAME_BYTES: u32 = 1 << 20;

/// Where a span of dataset rows came from: one record per accepted
/// (trace, push) contribution, in row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub trace_path: String,
    pub class_index: u16,
    /// Sample offsets of the first and last accepted frame in the trace.
    pub first_frame_start: u64,
    pub last_frame_start: u64,
    pub n_frames: u64,
}

/// Feature matrix plus aligned labels, class names, and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub features: Matrix<T>,
    pub labels: Vec<u16>,
    pub class_names: Vec<String>,
    pub provenance: Vec<ProvenanceRecord>,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(
        features: Matrix<T>,
        labels: Vec<u16>,
        class_names: Vec<String>,
        provenance: Vec<ProvenanceRecord>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::LengthMismatch {
                left: features.rows(),
                right: labels.len(),
            });
        }
        let n_classes = class_names.len();
        for &label in &labels {
            if label as usize >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: label as usize,
                    n_classes,
                });
            }
        }
        Ok(Self {
            features,
            labels,
            class_names,
            provenance,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Row indices carrying `class`, in dataset order.
    pub fn rows_of_class(&self, class: u16) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_support(&self, class: u16) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// Subset by row indices; class names and provenance carry over.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Accumulates frames per class until every class holds exactly
/// `per_class_cap` rows. Rows land in push order.
pub struct DatasetBuilder<T> {
    class_names: Vec<String>,
    per_class_cap: usize,
    dim: Option<usize>,
    data: Vec<T>,
    labels: Vec<u16>,
    per_class_counts: Vec<usize>,
    provenance: Vec<ProvenanceRecord>,
}

impl<T: Real> DatasetBuilder<T> {
    pub fn new(class_names: Vec<String>, per_class_cap: usize) -> Result<Self> {
        if per_class_cap == 0 {
            return Err(Error::BadConfig {
                detail: "per-class cap must be positive".into(),
            });
        }
        if class_names.is_empty() {
            return Err(Error::BadConfig {
                detail: "at least one class is required".into(),
            });
        }
        if class_names.len() > u16::MAX as usize {
            return Err(Error::BadConfig {
                detail: format!("{} classes exceed the u16 label range", class_names.len()),
            });
        }
        let n = class_names.len();
        Ok(Self {
            class_names,
            per_class_cap,
            dim: None,
            data: Vec::new(),
            labels: Vec::new(),
            per_class_counts: vec![0; n],
            provenance: Vec::new(),
        })
    }

    /// True once `class` has reached the cap; callers can stop featurizing.
    pub fn class_full(&self, class: u16) -> bool {
        self.per_class_counts[class as usize] >= self.per_class_cap
    }

    /// Accept frames for `class` up to the cap; surplus frames are dropped.
    pub fn push_frames(
        &mut self,
        class: u16,
        trace_path: &str,
        frames: Vec<FeatureVector<T>>,
    ) -> Result<()> {
        if class as usize >= self.class_names.len() {
            return Err(Error::LabelOutOfRange {
                label: class as usize,
                n_classes: self.class_names.len(),
            });
        }
        let have = self.per_class_counts[class as usize];
        let take = frames.len().min(self.per_class_cap - have.min(self.per_class_cap));
        if take == 0 {
            return Ok(());
        }
        let accepted = &frames[..take];
        for frame in accepted {
            let dim = *self.dim.get_or_insert(frame.bins.len());
            if frame.bins.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: frame.bins.len(),
                });
            }
            self.data.extend_from_slice(&frame.bins);
            self.labels.push(class);
        }
        self.per_class_counts[class as usize] += take;
        self.provenance.push(ProvenanceRecord {
            trace_path: trace_path.to_string(),
            class_index: class,
            first_frame_start: accepted[0].frame_start,
            last_frame_start: accepted[take - 1].frame_start,
            n_frames: take as u64,
        });
        Ok(())
    }

    /// Finish assembly; errors if any class fell short of the cap.
    pub fn finish(self) -> Result<LabeledDataset<T>> {
        for (c, &count) in self.per_class_counts.iter().enumerate() {
            if count < self.per_class_cap {
                return Err(Error::InsufficientSamples {
                    class_index: c,
                    class_name: self.class_names[c].clone(),
                    needed: self.per_class_cap as u64,
                    available: count as u64,
                });
            }
        }
        let dim = self.dim.unwrap_or(0);
        let rows = self.labels.len();
        LabeledDataset::new(
            Matrix::from_vec(rows, dim, self.data),
            self.labels,
            self.class_names,
            self.provenance,
        )
    }
}

/// One-shot assembly from in-memory frame collections.
/// `sources` items are (class index, trace path, frames).
pub fn assemble<T: Real>(
    class_names: Vec<String>,
    sources: Vec<(u16, String, Vec<FeatureVector<T>>)>,
    per_class_cap: usize,
) -> Result<LabeledDataset<T>> {
    let mut builder = DatasetBuilder::new(class_names, per_class_cap)?;
    for (class, path, frames) in sources {
        builder.push_frames(class, &path, frames)?;
    }
    builder.finish()
}

/// Stratified split: per class, floor(train_fraction·n_c) rows to train
/// after a seeded shuffle, remainder to test. A pure function of
/// (dataset, fraction, seed).
pub fn split_stratified<T: Real>(
    ds: &LabeledDataset<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::BadConfig {
            detail: format!("train fraction {train_fraction} must lie in (0, 1)"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for c in 0..ds.n_classes() as u16 {
        let mut rows = ds.rows_of_class(c);
        if rows.len() < 2 {
            return Err(Error::DegenerateClass {
                class_index: c as usize,
                support: rows.len() as u64,
            });
        }
        rows.shuffle(&mut rng);
        let n_train = (train_fraction * rows.len() as f64).floor() as usize;
        train_idx.extend_from_slice(&rows[..n_train]);
        test_idx.extend_from_slice(&rows[n_train..]);
    }
    Ok((ds.select(&train_idx), ds.select(&test_idx)))
}

/// Per-feature min-max range learned from a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
}

impl<T: Real> ScalerParams<T> {
    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

/// Learn per-feature min/max over the given rows only.
pub fn fit_scaler<T: Real>(train: &LabeledDataset<T>) -> Result<ScalerParams<T>> {
    if train.n_samples() == 0 {
        return Err(Error::BadLength {
            detail: "cannot fit a scaler on an empty dataset".into(),
        });
    }
    let dim = train.dim();
    let mut min = train.features.row(0).to_vec();
    let mut max = min.clone();
    for r in 1..train.n_samples() {
        let row = train.features.row(r);
        for j in 0..dim {
            if row[j] < min[j] {
                min[j] = row[j];
            }
            if row[j] > max[j] {
                max[j] = row[j];
            }
        }
    }
    Ok(ScalerParams { min, max })
}

/// x' = (x − min)/(max − min); constant features map to 0; values outside
/// the fitted range are not clipped.
pub fn apply_scaler<T: Real>(params: &ScalerParams<T>, m: &Matrix<T>) -> Result<Matrix<T>> {
    if m.cols() != params.dim() {
        return Err(Error::DimMismatch {
            expected: params.dim(),
            got: m.cols(),
        });
    }
    let span: Vec<T> = params
        .min
        .iter()
        .zip(&params.max)
        .map(|(&lo, &hi)| hi - lo)
        .collect();
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for j in 0..row.len() {
            row[j] = if span[j] > T::zero() {
                (row[j] - params.min[j]) / span[j]
            } else {
                T::zero()
            };
        }
    }
    Ok(out)
}

fn prov_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".prov.json");
    std::path::PathBuf::from(name)
}

/// Persist as "EMDS": magic, version u16, n_samples u32, dim u32,
/// n_classes u16, length-prefixed UTF-8 class names, u16 labels, row-major
/// little-endian binary32 features. Provenance goes to a JSON sidecar.
pub fn save_dataset(ds: &LabeledDataset<f32>, path: &Path) -> Result<()> {
    let n_samples = u32::try_from(ds.n_samples()).map_err(|_| Error::BadLength {
        detail: format!("{} rows exceed the u32 sample count", ds.n_samples()),
    })?;
    let dim = u32::try_from(ds.dim()).map_err(|_| Error::BadLength {
        detail: format!("dim {} exceeds the u32 range", ds.dim()),
    })?;
    let io_err = |e: std::io::Error| Error::Io {
        offset: 0,
        source: e,
    };
    wire::write_atomic_with(path, |w| {
        use std::io::Write as _;
        w.write_all(MAGIC).map_err(io_err)?;
        wire::write_u16(w, VERSION).map_err(io_err)?;
        wire::write_u32(w, n_samples).map_err(io_err)?;
        wire::write_u32(w, dim).map_err(io_err)?;
        wire::write_u16(w, ds.n_classes() as u16).map_err(io_err)?;
        for name in &ds.class_names {
            wire::write_u32(w, name.len() as u32).map_err(io_err)?;
            w.write_all(name.as_bytes()).map_err(io_err)?;
        }
        for &label in &ds.labels {
            wire::write_u16(w, label).map_err(io_err)?;
        }
        for r in 0..ds.n_samples() {
            for &v in ds.features.row(r) {
                wire::write_f32(w, v).map_err(io_err)?;
            }
        }
        Ok(())
    })?;
    let sidecar = serde_json::to_vec_pretty(&ds.provenance)?;
    wire::write_atomic(&prov_path(path), &sidecar)
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset<f32>> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                offset: 0,
                source: e,
            }
        }
    })?;
    let mut r = std::io::BufReader::new(file);
    wire::expect_magic(&mut r, MAGIC, path)?;
    wire::expect_version(&mut r, VERSION, path)?;
    let n_samples = wire::read_u32(&mut r, path, "sample count")? as usize;
    let dim = wire::read_u32(&mut r, path, "feature dim")? as usize;
    let n_classes = wire::read_u16(&mut r, path, "class count")? as usize;

    let mut class_names = Vec::with_capacity(n_classes);
    for i in 0..n_classes {
        let len = wire::read_u32(&mut r, path, "class name length")?;
        if len > MAX_NAME_BYTES {
            return Err(Error::CorruptLength {
                path: path.to_path_buf(),
                detail: format!("class name {i} claims {len} bytes"),
            });
        }
        let bytes = wire::read_bytes(&mut r, len as usize, path, "class name")?;
        let name = String::from_utf8(bytes).map_err(|_| Error::CorruptLength {
            path: path.to_path_buf(),
            detail: format!("class name {i} is not valid UTF-8"),
        })?;
        class_names.push(name);
    }

    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        labels.push(wire::read_u16(&mut r, path, "label")?);
    }

    let mut data = vec![0f32; n_samples * dim];
    let mut row_bytes = vec![0u8; dim * 4];
    for row in 0..n_samples {
        r.read_exact(&mut row_bytes).map_err(|_| Error::CorruptLength {
            path: path.to_path_buf(),
            detail: format!("feature row {row} is truncated"),
        })?;
        for (j, chunk) in row_bytes.chunks_exact(4).enumerate() {
            data[row * dim + j] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    wire::expect_eof(&mut r, path)?;

    let provenance = match std::fs::read(prov_path(path)) {
        Ok(bytes) => serde_json::from_slice(&bytes)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => {
            return Err(Error::Io {
                offset: 0,
                source: e,
            })
        }
    };

    LabeledDataset::new(Matrix::from_vec(n_samples, dim, data), labels, class_names, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(bins: Vec<f32>, start: u64) -> FeatureVector<f32> {
        FeatureVector { bins, frame_start: start }
    }

    fn frames(n: usize, dim: usize, base: f32) -> Vec<FeatureVector<f32>> {
        (0..n)
            .map(|i| frame(vec![base + i as f32; dim], i as u64 * 10))
            .collect()
    }

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn small_dataset() -> LabeledDataset<f32> {
        assemble(
            names(&["a", "b"]),
            vec![
                (0, "t0".into(), frames(6, 3, 0.0)),
                (1, "t1".into(), frames(6, 3, 100.0)),
            ],
            6,
        )
        .unwrap()
    }

    #[test]
    fn four_classes_capped_at_thirty_thousand() {
        let sources = (0..4u16)
            .map(|c| (c, format!("trace{c}"), frames(30_000, 1, c as f32)))
            .collect();
        let ds = assemble(names(&["w", "x", "y", "z"]), sources, 30_000).unwrap();
        assert_eq!(ds.n_samples(), 120_000);
        for c in 0..4 {
            assert_eq!(ds.class_support(c), 30_000);
        }
    }

    #[test]
    fn cap_zero_is_rejected() {
        assert!(matches!(
            DatasetBuilder::<f32>::new(names(&["a"]), 0),
            Err(Error::BadConfig { .. })
        ));
    }

    #[test]
    fn shortfall_names_the_class() {
        let result = assemble(
            names(&["a", "b"]),
            vec![
                (0, "t0".into(), frames(5, 2, 0.0)),
                (1, "t1".into(), frames(3, 2, 0.0)),
            ],
            4,
        );
        match result {
            Err(Error::InsufficientSamples {
                class_index,
                class_name,
                needed,
                available,
            }) => {
                assert_eq!(class_index, 1);
                assert_eq!(class_name, "b");
                assert_eq!(needed - available, 1);
            }
            other => panic!("expected InsufficientSamples, got {other:?}"),
        }
    }

    #[test]
    fn cap_takes_prefix_in_push_order() {
        let ds = assemble(
            names(&["a"]),
            vec![
                (0, "t0".into(), frames(3, 1, 0.0)),
                (0, "t1".into(), frames(5, 1, 50.0)),
            ],
            4,
        )
        .unwrap();
        assert_eq!(ds.n_samples(), 4);
        let col: Vec<f32> = (0..4).map(|r| ds.features.row(r)[0]).collect();
        assert_eq!(col, vec![0.0, 1.0, 2.0, 50.0]);
        assert_eq!(ds.provenance.len(), 2);
        assert_eq!(ds.provenance[1].n_frames, 1);
    }

    #[test]
    fn split_of_balanced_120k_is_84k_36k() {
        let sources = (0..4u16)
            .map(|c| (c, format!("trace{c}"), frames(30_000, 1, c as f32)))
            .collect();
        let ds = assemble(names(&["w", "x", "y", "z"]), sources, 30_000).unwrap();
        let (train, test) = split_stratified(&ds, 0.7, 42).unwrap();
        assert_eq!(train.n_samples(), 84_000);
        assert_eq!(test.n_samples(), 36_000);
        for c in 0..4 {
            assert_eq!(train.class_support(c), 21_000);
            assert_eq!(test.class_support(c), 9_000);
        }
    }

    #[test]
    fn split_floor_arithmetic_on_ten_rows() {
        let ds = assemble(names(&["a"]), vec![(0, "t".into(), frames(10, 1, 0.0))], 10).unwrap();
        let (train, test) = split_stratified(&ds, 0.7, 0).unwrap();
        assert_eq!((train.n_samples(), test.n_samples()), (7, 3));
    }

    #[test]
    fn split_is_deterministic_in_seed() {
        let ds = small_dataset();
        let (tr1, te1) = split_stratified(&ds, 0.5, 9).unwrap();
        let (tr2, te2) = split_stratified(&ds, 0.5, 9).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let (tr3, _) = split_stratified(&ds, 0.5, 10).unwrap();
        assert_ne!(tr1.features, tr3.features);
    }

    #[test]
    fn degenerate_class_is_rejected() {
        let ds = LabeledDataset::new(
            Matrix::from_vec(3, 1, vec![1.0f32, 2.0, 3.0]),
            vec![0, 0, 1],
            names(&["a", "b"]),
            Vec::new(),
        )
        .unwrap();
        assert!(matches!(
            split_stratified(&ds, 0.5, 0),
            Err(Error::DegenerateClass { class_index: 1, support: 1 })
        ));
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let ds = small_dataset();
        for f in [0.0, 1.0, -0.2, 1.5] {
            assert!(matches!(
                split_stratified(&ds, f, 0),
                Err(Error::BadConfig { .. })
            ));
        }
    }

    #[test]
    fn scaler_fits_min_and_max() {
        let ds = LabeledDataset::new(
            Matrix::from_vec(3, 2, vec![0.0f32, -1.0, 5.0, 0.0, 10.0, 1.0]),
            vec![0, 0, 0],
            names(&["a"]),
            Vec::new(),
        )
        .unwrap();
        let p = fit_scaler(&ds).unwrap();
        assert_eq!(p.min, vec![0.0, -1.0]);
        assert_eq!(p.max, vec![10.0, 1.0]);

        let scaled = apply_scaler(&p, &ds.features).unwrap();
        assert_eq!(scaled.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn scaler_single_row_and_constant_features() {
        let ds = LabeledDataset::new(
            Matrix::from_vec(1, 2, vec![3.0f32, 4.0]),
            vec![0],
            names(&["a"]),
            Vec::new(),
        )
        .unwrap();
        let p = fit_scaler(&ds).unwrap();
        assert_eq!(p.min, p.max);
        let scaled = apply_scaler(&p, &ds.features).unwrap();
        assert_eq!(scaled.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn scaler_does_not_clip() {
        let p = ScalerParams {
            min: vec![0.0f32],
            max: vec![10.0],
        };
        let m = Matrix::from_vec(2, 1, vec![12.0f32, -2.0]);
        let scaled = apply_scaler(&p, &m).unwrap();
        assert_eq!(scaled.row(0), &[1.2]);
        assert_eq!(scaled.row(1), &[-0.2]);
    }

    #[test]
    fn scaler_dim_mismatch() {
        let p = ScalerParams {
            min: vec![0.0f32],
            max: vec![1.0],
        };
        let m = Matrix::from_vec(1, 2, vec![0.0f32, 0.0]);
        assert!(matches!(
            apply_scaler(&p, &m),
            Err(Error::DimMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn emds_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.emds");
        let ds = LabeledDataset::new(
            Matrix::from_vec(
                3,
                4,
                vec![
                    1.5f32, -0.0, f32::MIN_POSITIVE, 3.25e-7, 0.1, 0.2, 0.3, 0.4, -1e30, 1e30,
                    7.0, -7.0,
                ],
            ),
            vec![0, 2, 1],
            names(&["alpha", "beta", "gamma"]),
            vec![ProvenanceRecord {
                trace_path: "t.cfile".into(),
                class_index: 0,
                first_frame_start: 0,
                last_frame_start: 20,
                n_frames: 3,
            }],
        )
        .unwrap();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.class_names, ds.class_names);
        assert_eq!(back.provenance, ds.provenance);
        for r in 0..3 {
            for (a, b) in ds.features.row(r).iter().zip(back.features.row(r)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        // A second save of the loaded dataset must be byte-identical.
        let path2 = dir.path().join("d2.emds");
        save_dataset(&back, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn emds_corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.emds");
        save_dataset(&small_dataset(), &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let bad_magic = dir.path().join("m.emds");
        let mut bytes = good.clone();
        bytes[0] = b'X';
        std::fs::write(&bad_magic, &bytes).unwrap();
        assert!(matches!(load_dataset(&bad_magic), Err(Error::BadMagic { .. })));

        let bad_version = dir.path().join("v.emds");
        let mut bytes = good.clone();
        bytes[4] = 99;
        std::fs::write(&bad_version, &bytes).unwrap();
        assert!(matches!(
            load_dataset(&bad_version),
            Err(Error::VersionMismatch { .. })
        ));

        let truncated = dir.path().join("t.emds");
        std::fs::write(&truncated, &good[..good.len() - 5]).unwrap();
        assert!(matches!(
            load_dataset(&truncated),
            Err(Error::CorruptLength { .. })
        ));

        let trailing = dir.path().join("x.emds");
        let mut bytes = good.clone();
        bytes.push(0);
        std::fs::write(&trailing, &bytes).unwrap();
        assert!(matches!(
            load_dataset(&trailing),
            Err(Error::CorruptLength { .. })
        ));

        assert!(matches!(
            load_dataset(&dir.path().join("missing.emds")),
            Err(Error::MissingFile { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_is_a_stratified_partition(
            counts in proptest::collection::vec(2usize..40, 1..5),
            frac in 0.05f64..0.95,
            seed in 0u64..1000,
        ) {
            let class_names: Vec<String> = (0..counts.len()).map(|c| format!("c{c}")).collect();
            let mut sources = Vec::new();
            for (c, &n) in counts.iter().enumerate() {
                // Encode (class, index) into the feature so rows are unique.
                let fr: Vec<FeatureVector<f32>> = (0..n)
                    .map(|i| frame(vec![c as f32 * 1000.0 + i as f32], i as u64))
                    .collect();
                sources.push((c as u16, format!("t{c}"), fr));
            }
            let cap = *counts.iter().min().unwrap();
            let ds = assemble(class_names, sources, cap).unwrap();
            let (train, test) = split_stratified(&ds, frac, seed).unwrap();

            prop_assert_eq!(train.n_samples() + test.n_samples(), ds.n_samples());
            let mut seen: Vec<u32> = train.features.iter_rows()
                .chain(test.features.iter_rows())
                .map(|r| r[0].to_bits())
                .collect();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), ds.n_samples());

            for c in 0..ds.n_classes() as u16 {
                let n_c = ds.class_support(c) as f64;
                let got = train.class_support(c) as f64;
                prop_assert!((got - frac * n_c).abs() <= 1.0);
            }
        }

        #[test]
        fn scaler_maps_train_to_unit_interval_and_preserves_order(
            rows in 2usize..20,
            cols in 1usize..6,
            seed in 0u64..1000,
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols).map(|_| rng.random_range(-100.0..100.0)).collect();
            let ds = LabeledDataset::new(
                Matrix::from_vec(rows, cols, data),
                vec![0; rows],
                vec!["a".to_string()],
                Vec::new(),
            ).unwrap();
            let p = fit_scaler(&ds).unwrap();
            let scaled = apply_scaler(&p, &ds.features).unwrap();
            for r in 0..rows {
                for j in 0..cols {
                    let v = scaled.row(r)[j];
                    prop_assert!((-1e-6..=1.0 + 1e-6).contains(&v));
                }
            }
            for j in 0..cols {
                if p.max[j] > p.min[j] {
                    for r1 in 0..rows {
                        for r2 in 0..rows {
                            let before = ds.features.row(r1)[j] < ds.features.row(r2)[j];
                            let after = scaled.row(r1)[j] < scaled.row(r2)[j];
                            prop_assert_eq!(before, after);
                        }
                    }
                }
            }
        }

        #[test]
        fn emds_roundtrip_random(
            rows in 0usize..12,
            cols in 1usize..8,
            n_classes in 1usize..4,
            seed in 0u64..500,
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..rows * cols).map(|_| rng.random_range(-1e6..1e6)).collect();
            let labels: Vec<u16> = (0..rows).map(|_| rng.random_range(0..n_classes as u16)).collect();
            let ds = LabeledDataset::new(
                Matrix::from_vec(rows, cols, data),
                labels,
                (0..n_classes).map(|c| format!("class-{c}")).collect(),
                Vec::new(),
            ).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.emds");
            save_dataset(&ds, &path).unwrap();
            let back = load_dataset(&path).unwrap();
            prop_assert_eq!(back.labels, ds.labels);
            prop_assert_eq!(back.class_names, ds.class_names);
            for r in 0..rows {
                for (a, b) in ds.features.row(r).iter().zip(back.features.row(r)) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
