//! `emtrace`: scenario generation, featurization, training, cross-device
//! evaluation, transfer fine-tuning, correlation heatmaps, and report
//! rendering, with one JSON config and per-command manifests.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emtrace::emusim::Scenario;
use emtrace::metrics::ReportFormat;
use emtrace::{Error, Result};
use emtrace_cli::commands;
use emtrace_cli::config::load_config;
use emtrace_cli::ExperimentManifest;

#[derive(Parser)]
#[command(
    name = "emtrace",
    version,
    about = "Machine-learning toolkit for EM side-channel I/Q traces"
)]
struct Cli {
    /// JSON experiment config; unset fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving artifacts and manifests.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,
    /// Worker-thread bound. Execution is currently sequential; any value
    /// is accepted for forward compatibility and results never depend on
    /// it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic two-device scenario.
    Scenario {
        /// dragon2dev4act, dragon2dev3act, dragon2dev2act, or echo2dev4act.
        #[arg(long)]
        name: Option<Scenario>,
    },
    /// Convert I/Q traces (with sidecars) into one labeled dataset.
    Featurize {
        /// Trace files; each needs a <trace>.meta.json sidecar.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Output dataset file name, created in the output directory.
        #[arg(long, default_value = "dataset.emds")]
        out: String,
    },
    /// Split a dataset, train a classifier, and report on both splits.
    TrainEval {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Evaluate a saved model on a full target dataset.
    CrossEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Scaler file, required under the reuse-train scaler policy.
        #[arg(long)]
        scaler: Option<PathBuf>,
    },
    /// Fine-tune a frozen copy of a trained model on a target dataset.
    Transfer {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Correlate class-mean spectra across datasets into a CSV heatmap.
    Correlate {
        /// Datasets as device=path pairs, e.g. dragon-1=ds1.emds.
        #[arg(required = true)]
        datasets: Vec<String>,
        #[arg(long, default_value = "heatmap.csv")]
        out: String,
    },
    /// Render a saved JSON report as text, csv, or json.
    Report {
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn parse_labeled(datasets: &[String]) -> Result<Vec<(String, PathBuf)>> {
    datasets
        .iter()
        .map(|pair| match pair.split_once('=') {
            Some((dev, path)) if !dev.is_empty() && !path.is_empty() => {
                Ok((dev.to_string(), PathBuf::from(path)))
            }
            _ => Err(Error::BadConfig {
                detail: format!("expected device=path, got {pair:?}"),
            }),
        })
        .collect()
}

fn parse_format(s: &str) -> Result<ReportFormat> {
    match s {
        "text" => Ok(ReportFormat::Text),
        "json" => Ok(ReportFormat::Json),
        "csv" => Ok(ReportFormat::Csv),
        other => Err(Error::BadConfig {
            detail: format!("unknown report format {other:?}; use text, json, or csv"),
        }),
    }
}

fn summarize(m: &ExperimentManifest) {
    print!("{}: ok", m.command);
    for (k, v) in &m.metrics {
        print!("  {k}={v:.4}");
    }
    println!();
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::BadConfig {
            detail: "--threads must be at least 1".into(),
        });
    }
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let out = &cli.out_dir;
    match cli.command {
        Cmd::Scenario { name } => summarize(&commands::cmd_scenario(&cfg, out, name)?),
        Cmd::Featurize { traces, out: name } => {
            summarize(&commands::cmd_featurize(&cfg, out, &traces, &name)?)
        }
        Cmd::TrainEval { dataset } => summarize(&commands::cmd_train_eval(&cfg, out, &dataset)?),
        Cmd::CrossEval {
            model,
            dataset,
            scaler,
        } => summarize(&commands::cmd_cross_eval(
            &cfg,
            out,
            &model,
            &dataset,
            scaler.as_deref(),
        )?),
        Cmd::Transfer { base, dataset } => {
            summarize(&commands::cmd_transfer(&cfg, out, &base, &dataset)?)
        }
        Cmd::Correlate { datasets, out: name } => {
            let labeled = parse_labeled(&datasets)?;
            summarize(&commands::cmd_correlate(&cfg, out, &labeled, &name)?)
        }
        Cmd::Report { path, format } => {
            let bytes = commands::cmd_report(&path, parse_format(&format)?)?;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| Error::Io {
                    offset: 0,
                    source: e,
                })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": e.to_string(),
                "kind": e.kind(),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
