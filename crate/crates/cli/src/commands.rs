//! The experiment recipes behind each subcommand. Every function writes
//! its artifacts plus a manifest into the output directory and returns the
//! manifest. File paths inside artifacts are relative, so a rerun with the
//! same seed in a different directory produces byte-identical files.

use std::path::{Path, PathBuf};

use emtrace::dataset::{
    apply_scaler, fit_scaler, load_dataset, save_dataset, split_stratified, DatasetBuilder,
    LabeledDataset, ScalerParams,
};
use emtrace::emusim::{make_scenario, Scenario, ScenarioConfig, SCENARIO_MANIFEST_NAME};
use emtrace::metrics::{render_report, report_named, ClassificationReport, ReportFormat};
use emtrace::neuralnet::{
    build_transfer_model, init_network_any_depth, load_model, save_model, train, DenseNetwork,
};
use emtrace::correlation::{class_mean_spectrum, correlate, device_activity_label, export_heatmap};
use emtrace::spectral::StftStream;
use emtrace::trace_io::open_trace_with_sidecar;
use emtrace::{write_atomic, Error, Matrix, Result};

use crate::config::{ExperimentConfig, ScalerPolicy};
use crate::manifest::ExperimentManifest;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        offset: 0,
        source: e,
    })
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        offset: 0,
        source: e,
    }
}

/// Generate the synthetic scenario named by `--name` (or the config) into
/// the output directory.
pub fn cmd_scenario(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    name: Option<Scenario>,
) -> Result<ExperimentManifest> {
    let scenario = name.or(cfg.scenario).ok_or_else(|| Error::BadConfig {
        detail: "no scenario named; pass --name or set \"scenario\" in the config".into(),
    })?;
    ensure_dir(out_dir)?;
    let sc_cfg = ScenarioConfig {
        frames_per_class: cfg.per_class_cap as u64,
        fft_size: cfg.stft.fft_size,
        overlap: cfg.stft.overlap,
        ..ScenarioConfig::default()
    };
    let sc = make_scenario(scenario, out_dir, &sc_cfg, cfg.seed)?;

    let mut m = ExperimentManifest::new("scenario", cfg);
    for t in &sc.traces {
        m.push_output(out_dir, &t.path)?;
        m.push_output(out_dir, &t.sidecar)?;
    }
    m.push_output(out_dir, SCENARIO_MANIFEST_NAME)?;
    m.metric("traces", sc.traces.len() as f64);
    m.metric("samples_per_file", sc.samples_per_file as f64);
    m.write(out_dir, "scenario.manifest.json")?;
    Ok(m)
}

/// Stream traces through the STFT into one labeled dataset. Classes are
/// the sorted distinct activity labels of the sidecars; rows per class are
/// capped by the config in the order the traces are given.
pub fn cmd_featurize(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    traces: &[PathBuf],
    out_name: &str,
) -> Result<ExperimentManifest> {
    if traces.is_empty() {
        return Err(Error::BadConfig {
            detail: "no input traces given".into(),
        });
    }
    ensure_dir(out_dir)?;

    let readers = traces
        .iter()
        .map(|p| open_trace_with_sidecar(p))
        .collect::<Result<Vec<_>>>()?;
    let mut class_names: Vec<String> = readers
        .iter()
        .map(|r| r.meta().activity_label.clone())
        .collect();
    class_names.sort();
    class_names.dedup();

    let mut builder = DatasetBuilder::new(class_names.clone(), cfg.per_class_cap)?;
    for (reader, path) in readers.into_iter().zip(traces) {
        let label = reader.meta().activity_label.clone();
        let class = class_names.iter().position(|n| *n == label).unwrap() as u16;
        let mut stream = StftStream::<f32>::new(cfg.stft.clone())?;
        let mut frames = Vec::new();
        for block in reader.into_blocks(1 << 15) {
            stream.push_block(&block?, &mut frames);
        }
        // Provenance keeps the file name only, so identically seeded runs
        // in different directories stay byte-identical.
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        builder.push_frames(class, &name, frames)?;
    }
    let ds = builder.finish()?;
    save_dataset(&ds, &out_dir.join(out_name))?;

    let mut m = ExperimentManifest::new("featurize", cfg);
    for p in traces {
        m.push_input(out_dir, p)?;
        m.push_input(out_dir, &sidecar_path(p))?;
    }
    m.push_output(out_dir, out_name)?;
    m.metric("rows", ds.labels.len() as f64);
    m.metric("classes", ds.n_classes() as f64);
    m.write(out_dir, &manifest_name(out_name))?;
    Ok(m)
}

fn sidecar_path(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// "<stem>.manifest.json" alongside the named artifact.
fn manifest_name(artifact: &str) -> String {
    let stem = artifact.rsplit_once('.').map_or(artifact, |(s, _)| s);
    format!("{stem}.manifest.json")
}

fn save_scaler(params: &ScalerParams<f32>, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(params)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn load_scaler(path: &Path) -> Result<ScalerParams<f32>> {
    let bytes = std::fs::read(path).map_err(io_err)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn write_report(r: &ClassificationReport, dir: &Path, name: &str) -> Result<()> {
    write_atomic(&dir.join(name), &render_report(r, ReportFormat::Json))
}

fn eval_report(
    net: &DenseNetwork<f32>,
    x: &Matrix<f32>,
    labels: &[u16],
    class_names: &[String],
) -> Result<ClassificationReport> {
    let preds = net.predict(x)?;
    report_named(labels, &preds, class_names)
}

/// Stratified split, scaler fit on the train split, train, and report on
/// both splits. Writes the model, the scaler, and both reports.
pub fn cmd_train_eval(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    dataset: &Path,
) -> Result<ExperimentManifest> {
    ensure_dir(out_dir)?;
    let ds = load_dataset(dataset)?;
    let (train_ds, test_ds) = split_stratified(&ds, cfg.split_fraction, cfg.seed)?;
    let scaler = fit_scaler(&train_ds)?;
    let x_train = apply_scaler(&scaler, &train_ds.features)?;
    let x_test = apply_scaler(&scaler, &test_ds.features)?;

    let net = init_network_any_depth::<f32>(ds.dim(), &cfg.hidden_dims, ds.n_classes(), cfg.seed)?;
    let (net, history) = train(net, &x_train, &train_ds.labels, &cfg.train)?;

    let train_report = eval_report(&net, &x_train, &train_ds.labels, &ds.class_names)?;
    let test_report = eval_report(&net, &x_test, &test_ds.labels, &ds.class_names)?;

    save_model(&net, &out_dir.join("model.emnn"))?;
    save_scaler(&scaler, &out_dir.join("scaler.json"))?;
    write_report(&train_report, out_dir, "train-report.json")?;
    write_report(&test_report, out_dir, "test-report.json")?;

    let mut m = ExperimentManifest::new("train-eval", cfg);
    m.push_input(out_dir, dataset)?;
    for n in ["model.emnn", "scaler.json", "train-report.json", "test-report.json"] {
        m.push_output(out_dir, n)?;
    }
    m.metric("train_accuracy", train_report.accuracy);
    m.metric("test_accuracy", test_report.accuracy);
    if let Some(e) = history.epochs.last() {
        m.metric("final_train_loss", e.train_loss);
    }
    m.write(out_dir, "train-eval.manifest.json")?;
    Ok(m)
}

/// Evaluate a saved model on the full target dataset under the configured
/// scaler policy. The report is written as crossed-devices-report.json.
pub fn cmd_cross_eval(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    model: &Path,
    dataset: &Path,
    scaler_file: Option<&Path>,
) -> Result<ExperimentManifest> {
    ensure_dir(out_dir)?;
    let net = load_model(model)?;
    let ds = load_dataset(dataset)?;
    if net.input_dim != ds.dim() {
        return Err(Error::DimMismatch {
            expected: net.input_dim,
            got: ds.dim(),
        });
    }

    let scaler = match cfg.scaler_policy {
        ScalerPolicy::RefitTarget => fit_scaler(&ds)?,
        ScalerPolicy::ReuseTrain => {
            let p = scaler_file.ok_or_else(|| Error::BadConfig {
                detail: "scaler policy reuse-train needs --scaler <file>".into(),
            })?;
            load_scaler(p)?
        }
    };
    let x = apply_scaler(&scaler, &ds.features)?;
    let report = eval_report(&net, &x, &ds.labels, &ds.class_names)?;
    write_report(&report, out_dir, "crossed-devices-report.json")?;

    let mut m = ExperimentManifest::new("cross-eval", cfg);
    m.push_input(out_dir, model)?;
    m.push_input(out_dir, dataset)?;
    if let (ScalerPolicy::ReuseTrain, Some(p)) = (cfg.scaler_policy, scaler_file) {
        m.push_input(out_dir, p)?;
    }
    m.push_output(out_dir, "crossed-devices-report.json")?;
    m.metric("accuracy", report.accuracy);
    m.write(out_dir, "cross-eval.manifest.json")?;
    Ok(m)
}

/// Freeze the base model's hidden layers under a fresh head and fine-tune
/// on the target dataset: stratified 70:30 split (per config), scaler fit
/// on the target's train split, reports on both splits.
pub fn cmd_transfer(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    base_model: &Path,
    dataset: &Path,
) -> Result<ExperimentManifest> {
    ensure_dir(out_dir)?;
    let base = load_model(base_model)?;
    let ds = load_dataset(dataset)?;
    let (train_ds, test_ds) = split_stratified(&ds, cfg.split_fraction, cfg.seed)?;
    let scaler = fit_scaler(&train_ds)?;
    let x_train = apply_scaler(&scaler, &train_ds.features)?;
    let x_test = apply_scaler(&scaler, &test_ds.features)?;

    let net = build_transfer_model(&base, ds.n_classes(), cfg.transfer_dim, cfg.seed)?;
    let (net, history) = train(net, &x_train, &train_ds.labels, &cfg.train)?;

    let train_report = eval_report(&net, &x_train, &train_ds.labels, &ds.class_names)?;
    let test_report = eval_report(&net, &x_test, &test_ds.labels, &ds.class_names)?;

    save_model(&net, &out_dir.join("transfer-model.emnn"))?;
    save_scaler(&scaler, &out_dir.join("transfer-scaler.json"))?;
    write_report(&train_report, out_dir, "transfer-train-report.json")?;
    write_report(&test_report, out_dir, "transfer-test-report.json")?;

    let mut m = ExperimentManifest::new("transfer", cfg);
    m.push_input(out_dir, base_model)?;
    m.push_input(out_dir, dataset)?;
    for n in [
        "transfer-model.emnn",
        "transfer-scaler.json",
        "transfer-train-report.json",
        "transfer-test-report.json",
    ] {
        m.push_output(out_dir, n)?;
    }
    m.metric("train_accuracy", train_report.accuracy);
    m.metric("test_accuracy", test_report.accuracy);
    if let Some(e) = history.epochs.last() {
        m.metric("final_train_loss", e.train_loss);
    }
    m.write(out_dir, "transfer.manifest.json")?;
    Ok(m)
}

/// Correlate class-mean raw spectra across datasets and export the CSV
/// heatmap. Each dataset is tagged with a device label; heatmap rows are
/// "device-activity".
pub fn cmd_correlate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    labeled_datasets: &[(String, PathBuf)],
    out_name: &str,
) -> Result<ExperimentManifest> {
    if labeled_datasets.is_empty() {
        return Err(Error::BadConfig {
            detail: "no datasets given".into(),
        });
    }
    ensure_dir(out_dir)?;
    let mut spectra = Vec::new();
    for (device, path) in labeled_datasets {
        let ds: LabeledDataset<f32> = load_dataset(path)?;
        for c in 0..ds.n_classes() {
            spectra.push((
                device_activity_label(device, &ds.class_names[c]),
                class_mean_spectrum(&ds, c as u16)?,
            ));
        }
    }
    let heat = correlate(&spectra)?;
    export_heatmap(&heat, &out_dir.join(out_name))?;

    let mut m = ExperimentManifest::new("correlate", cfg);
    for (_, path) in labeled_datasets {
        m.push_input(out_dir, path)?;
    }
    m.push_output(out_dir, out_name)?;
    m.metric("labels", heat.n() as f64);
    m.write(out_dir, &manifest_name(out_name))?;
    Ok(m)
}

/// Render a saved JSON report in the requested format.
pub fn cmd_report(path: &Path, format: ReportFormat) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(io_err)?;
    let report = emtrace::metrics::parse_report_json(&bytes)?;
    Ok(render_report(&report, format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use emtrace::emusim::ScenarioManifest;

    fn tiny_cfg(seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            seed,
            per_class_cap: 60,
            hidden_dims: vec![16, 8],
            ..ExperimentConfig::default()
        };
        cfg.train.seed = seed;
        cfg.train.epochs = 8;
        cfg
    }

    fn scenario_trace_paths(dir: &Path, device: &str) -> Vec<PathBuf> {
        let bytes = std::fs::read(dir.join(SCENARIO_MANIFEST_NAME)).unwrap();
        let sc: ScenarioManifest = serde_json::from_slice(&bytes).unwrap();
        sc.traces
            .iter()
            .filter(|t| t.device_id == device)
            .map(|t| dir.join(&t.path))
            .collect()
    }

    #[test]
    fn scenario_featurize_train_pipeline_runs_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let cfg = tiny_cfg(5);

        let sm = cmd_scenario(&cfg, out, None).unwrap();
        assert_eq!(sm.metrics["traces"], 8.0);
        crate::manifest::validate_manifest(out, &sm).unwrap();

        let traces = scenario_trace_paths(out, "dragon-1");
        assert_eq!(traces.len(), 4);
        let fm = cmd_featurize(&cfg, out, &traces, "ds1.emds").unwrap();
        assert_eq!(fm.metrics["rows"], 240.0);
        assert_eq!(fm.metrics["classes"], 4.0);

        let tm = cmd_train_eval(&cfg, out, &out.join("ds1.emds")).unwrap();
        assert!(tm.metrics["train_accuracy"] > 0.5);
        assert!(out.join("model.emnn").exists());
        assert!(out.join("scaler.json").exists());
        crate::manifest::validate_manifest(out, &tm).unwrap();
    }

    #[test]
    fn featurize_rejects_empty_trace_list() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(1);
        match cmd_featurize(&cfg, dir.path(), &[], "x.emds") {
            Err(Error::BadConfig { .. }) => {}
            other => panic!("expected BadConfig, got {other:?}"),
        }
    }

    #[test]
    fn class_names_are_sorted_regardless_of_trace_order() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let cfg = tiny_cfg(3);
        cmd_scenario(&cfg, out, None).unwrap();
        let mut traces = scenario_trace_paths(out, "dragon-1");
        traces.reverse();
        cmd_featurize(&cfg, out, &traces, "rev.emds").unwrap();
        let ds = load_dataset(&out.join("rev.emds")).unwrap();
        assert_eq!(
            ds.class_names,
            vec!["io".to_string(), "math".into(), "memory".into(), "print".into()]
        );
    }

    #[test]
    fn cross_eval_rejects_width_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let cfg = tiny_cfg(9);
        cmd_scenario(&cfg, out, None).unwrap();
        let traces = scenario_trace_paths(out, "dragon-1");
        cmd_featurize(&cfg, out, &traces, "ds1.emds").unwrap();
        cmd_train_eval(&cfg, out, &out.join("ds1.emds")).unwrap();

        let mut narrow = cfg.clone();
        narrow.stft.fft_size = 128;
        narrow.stft.overlap = 16;
        cmd_featurize(&narrow, out, &traces, "narrow.emds").unwrap();
        match cmd_cross_eval(&cfg, out, &out.join("model.emnn"), &out.join("narrow.emds"), None) {
            Err(Error::DimMismatch { expected, got }) => {
                assert_eq!(expected, 256);
                assert_eq!(got, 128);
            }
            other => panic!("expected DimMismatch, got {other:?}"),
        }
    }

    #[test]
    fn cross_eval_on_own_test_data_reuse_train_matches_train_eval_report() {
        // Sanity link between the two commands: evaluating the model on its
        // own full dataset with the training scaler reproduces training-run
        // behavior on the rows both saw.
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let mut cfg = tiny_cfg(11);
        cmd_scenario(&cfg, out, None).unwrap();
        let traces = scenario_trace_paths(out, "dragon-1");
        cmd_featurize(&cfg, out, &traces, "ds1.emds").unwrap();
        let tm = cmd_train_eval(&cfg, out, &out.join("ds1.emds")).unwrap();

        cfg.scaler_policy = ScalerPolicy::ReuseTrain;
        let cm = cmd_cross_eval(
            &cfg,
            out,
            &out.join("model.emnn"),
            &out.join("ds1.emds"),
            Some(&out.join("scaler.json")),
        )
        .unwrap();
        // Full-dataset accuracy is a support-weighted mix of the train and
        // test split accuracies.
        let lo = tm.metrics["train_accuracy"]
            .min(tm.metrics["test_accuracy"]);
        let hi = tm.metrics["train_accuracy"]
            .max(tm.metrics["test_accuracy"]);
        assert!(cm.metrics["accuracy"] >= lo - 1e-12 && cm.metrics["accuracy"] <= hi + 1e-12);
    }

    #[test]
    fn reuse_train_policy_without_scaler_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let mut cfg = tiny_cfg(13);
        cmd_scenario(&cfg, out, None).unwrap();
        let traces = scenario_trace_paths(out, "dragon-1");
        cmd_featurize(&cfg, out, &traces, "ds1.emds").unwrap();
        cmd_train_eval(&cfg, out, &out.join("ds1.emds")).unwrap();
        cfg.scaler_policy = ScalerPolicy::ReuseTrain;
        assert!(matches!(
            cmd_cross_eval(&cfg, out, &out.join("model.emnn"), &out.join("ds1.emds"), None),
            Err(Error::BadConfig { .. })
        ));
    }

    #[test]
    fn correlate_labels_are_device_activity_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let cfg = tiny_cfg(17);
        cmd_scenario(&cfg, out, None).unwrap();
        for dev in ["dragon-1", "dragon-2"] {
            let traces = scenario_trace_paths(out, dev);
            cmd_featurize(&cfg, out, &traces, &format!("{dev}.emds")).unwrap();
        }
        let m = cmd_correlate(
            &cfg,
            out,
            &[
                ("dragon-1".into(), out.join("dragon-1.emds")),
                ("dragon-2".into(), out.join("dragon-2.emds")),
            ],
            "heatmap.csv",
        )
        .unwrap();
        assert_eq!(m.metrics["labels"], 8.0);
        let heat = emtrace::correlation::parse_heatmap(&out.join("heatmap.csv")).unwrap();
        assert_eq!(heat.labels[0], "dragon-1-io");
        assert_eq!(heat.labels[4], "dragon-2-io");
    }

    #[test]
    fn report_renders_saved_json_as_text_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let cfg = tiny_cfg(19);
        cmd_scenario(&cfg, out, None).unwrap();
        let traces = scenario_trace_paths(out, "dragon-1");
        cmd_featurize(&cfg, out, &traces, "ds1.emds").unwrap();
        cmd_train_eval(&cfg, out, &out.join("ds1.emds")).unwrap();

        let txt = cmd_report(&out.join("test-report.json"), ReportFormat::Text).unwrap();
        let txt = String::from_utf8(txt).unwrap();
        assert!(txt.contains("accuracy"));
        assert!(txt.contains("print"));
        let csv = cmd_report(&out.join("test-report.json"), ReportFormat::Csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("label,precision,recall,f1,support,accuracy"));
    }

    #[test]
    fn transfer_keeps_base_hidden_layers_bitwise_and_reports_both_splits() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let cfg = tiny_cfg(23);
        cmd_scenario(&cfg, out, None).unwrap();
        for dev in ["dragon-1", "dragon-2"] {
            let traces = scenario_trace_paths(out, dev);
            cmd_featurize(&cfg, out, &traces, &format!("{dev}.emds")).unwrap();
        }
        cmd_train_eval(&cfg, out, &out.join("dragon-1.emds")).unwrap();
        let tm = cmd_transfer(
            &cfg,
            out,
            &out.join("model.emnn"),
            &out.join("dragon-2.emds"),
        )
        .unwrap();
        assert!(tm.metrics.contains_key("train_accuracy"));
        assert!(tm.metrics.contains_key("test_accuracy"));

        let base = load_model(&out.join("model.emnn")).unwrap();
        let tuned = load_model(&out.join("transfer-model.emnn")).unwrap();
        assert_eq!(tuned.layers.len(), base.layers.len() + 1);
        for (b, t) in base.layers[..base.layers.len() - 1]
            .iter()
            .zip(&tuned.layers)
        {
            assert!(!t.trainable);
            assert_eq!(b.weights.data(), t.weights.data());
            assert_eq!(b.biases, t.biases);
        }
    }

    #[test]
    fn identical_seeds_give_byte_identical_artifacts_across_directories() {
        let cfg = tiny_cfg(29);
        let mut digests = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let out = dir.path();
            cmd_scenario(&cfg, out, None).unwrap();
            for dev in ["dragon-1", "dragon-2"] {
                let traces = scenario_trace_paths(out, dev);
                cmd_featurize(&cfg, out, &traces, &format!("{dev}.emds")).unwrap();
            }
            cmd_train_eval(&cfg, out, &out.join("dragon-1.emds")).unwrap();
            cmd_cross_eval(&cfg, out, &out.join("model.emnn"), &out.join("dragon-2.emds"), None)
                .unwrap();
            cmd_transfer(&cfg, out, &out.join("model.emnn"), &out.join("dragon-2.emds")).unwrap();
            cmd_correlate(
                &cfg,
                out,
                &[
                    ("dragon-1".into(), out.join("dragon-1.emds")),
                    ("dragon-2".into(), out.join("dragon-2.emds")),
                ],
                "heatmap.csv",
            )
            .unwrap();
            let mut names: Vec<String> = std::fs::read_dir(out)
                .unwrap()
                .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect();
            names.sort();
            let run: Vec<(String, String)> = names
                .iter()
                .map(|n| {
                    let d = crate::manifest::digest_file(&out.join(n)).unwrap();
                    (n.clone(), d.sha256)
                })
                .collect();
            digests.push(run);
        }
        assert_eq!(digests[0], digests[1]);
    }
}
