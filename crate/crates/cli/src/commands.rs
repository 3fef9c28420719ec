//! Subcommand implementations. Each one reads its inputs from a
//! [`RunConfig`], writes its outputs under `config.out` and returns what it
//! wrote so callers (and tests) can inspect it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;
use spatial_trust::evalkit::{evaluate, roc_curve, write_coverage_csv, write_roc_csv, EvalReport};
use spatial_trust::gbdt::write_train_log;
use spatial_trust::records::{parse_dataset, split_dataset, write_dataset, Sample};
use spatial_trust::scenegraph::{
    build_graphs, sweep_targets, sweep_tau, write_metrics_csv, write_target_csv, GraphMetrics,
};
use spatial_trust::synthgen::{generate, write_truth_jsonl};
use spatial_trust::GbdtModel;

use crate::config::{ConfidenceSource, RunConfig};
use crate::pipeline::{ablate, confidences, labels, train_pipeline, AblationRow, TrainSummary};

pub const DATA_FILE: &str = "data.jsonl";
pub const TRUTH_FILE: &str = "data.truth.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const ROC_FILE: &str = "roc.csv";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const GRAPHS_FILE: &str = "graphs.json";
pub const GRAPH_METRICS_FILE: &str = "graph_metrics.csv";
pub const GRAPH_TARGETS_FILE: &str = "graph_targets.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

fn out_dir(config: &RunConfig) -> Result<&Path> {
    let dir = config.out.as_path();
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn timestamp(config: &RunConfig) -> Option<u64> {
    config
        .timestamp
        .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

fn load_samples(path: &Path) -> Result<Vec<Sample>> {
    parse_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_model(config: &RunConfig) -> Result<Option<GbdtModel>> {
    config
        .model
        .as_ref()
        .map(|p| GbdtModel::load(p).with_context(|| format!("loading model {}", p.display())))
        .transpose()
}

pub struct GenOutput {
    pub data: PathBuf,
    pub truth: PathBuf,
    pub n_samples: usize,
}

pub fn cmd_gen(config: &RunConfig) -> Result<GenOutput> {
    let synth = config.synth_config();
    synth.validate()?;
    let dir = out_dir(config)?;
    let dataset = generate(&synth)?;
    let data = dir.join(DATA_FILE);
    let truth = dir.join(TRUTH_FILE);
    write_dataset(&data, &dataset.samples).with_context(|| format!("cannot write {}", data.display()))?;
    write_truth_jsonl(create(&truth)?, &dataset.truth)?;
    info!("generated {} samples into {}", dataset.samples.len(), dir.display());
    Ok(GenOutput {
        data,
        truth,
        n_samples: dataset.samples.len(),
    })
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    created_at: Option<u64>,
    #[serde(flatten)]
    summary: &'a TrainSummary,
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    let samples = load_samples(config.require_data()?)?;
    let outcome = train_pipeline(&samples, &config.split_spec(), &config.train_config())?;
    let dir = out_dir(config)?;
    outcome.model.save(dir.join(MODEL_FILE))?;
    write_train_log(create(&dir.join(TRAIN_LOG_FILE))?, &outcome.log)?;
    write_json(
        &dir.join(TRAIN_SUMMARY_FILE),
        &SummaryFile {
            created_at: timestamp(config),
            summary: &outcome.summary,
        },
    )?;
    info!(
        "trained {} trees; train AUROC {:.3}, threshold {:.4}",
        outcome.model.trees.len(),
        outcome.summary.train_auroc,
        outcome.summary.threshold
    );
    Ok(outcome.summary)
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<u64>,
    confidence_source: ConfidenceSource,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn operating_threshold(config: &RunConfig, model: Option<&GbdtModel>) -> f64 {
    config
        .threshold
        .or_else(|| model.and_then(|m| m.decision_threshold))
        .unwrap_or(0.5)
}

pub fn cmd_eval(config: &RunConfig) -> Result<EvalReport> {
    let samples = load_samples(config.require_data()?)?;
    let model = load_model(config)?;
    let scores = confidences(&samples, model.as_ref(), config.confidence_source)?;
    let y = labels(&samples);
    let threshold = operating_threshold(config, model.as_ref());
    let report = evaluate(&scores, &y, threshold, &config.targets)?;
    let dir = out_dir(config)?;
    write_json(
        &dir.join(REPORT_FILE),
        &ReportFile {
            generated_at: timestamp(config),
            confidence_source: config.confidence_source,
            report: &report,
        },
    )?;
    write_roc_csv(create(&dir.join(ROC_FILE))?, &roc_curve(&scores, &y)?)?;
    write_coverage_csv(create(&dir.join(COVERAGE_FILE))?, &report.coverage_curve)?;
    info!("AUROC {:.4} over {} samples", report.auroc, report.n);
    Ok(report)
}

pub fn cmd_scenegraph(config: &RunConfig) -> Result<Vec<GraphMetrics>> {
    let samples = load_samples(config.require_data()?)?;
    let model = load_model(config)?;
    let dir = out_dir(config)?;
    if samples.is_empty() {
        write_json(&dir.join(GRAPHS_FILE), &Vec::<()>::new())?;
        write_metrics_csv(create(&dir.join(GRAPH_METRICS_FILE))?, &[])?;
        write_target_csv(create(&dir.join(GRAPH_TARGETS_FILE))?, &[])?;
        return Ok(Vec::new());
    }
    let scores = confidences(&samples, model.as_ref(), config.confidence_source)?;
    let tau = config
        .graph_tau
        .unwrap_or_else(|| operating_threshold(config, model.as_ref()));
    let graphs = build_graphs(&samples, &scores, tau)?;
    let sweep = sweep_tau(&samples, &scores, &config.taus)?;
    let targets = sweep_targets(&samples, &scores, &config.targets)?;
    write_json(&dir.join(GRAPHS_FILE), &graphs)?;
    write_metrics_csv(create(&dir.join(GRAPH_METRICS_FILE))?, &sweep)?;
    write_target_csv(create(&dir.join(GRAPH_TARGETS_FILE))?, &targets)?;
    info!("{} graphs at tau {tau}", graphs.len());
    Ok(sweep)
}

pub fn write_ablation_csv<W: Write>(mut w: W, rows: &[AblationRow], target: f64) -> std::io::Result<()> {
    writeln!(w, "configuration,auroc,coverage_at_target,target")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.configuration, r.auroc, r.coverage, target)?;
    }
    w.flush()
}

/// Trains on `data` and evaluates on `test_data`; without a test file the
/// data is split and the held-out partitions are used for evaluation.
pub fn cmd_ablate(config: &RunConfig) -> Result<Vec<AblationRow>> {
    let samples = load_samples(config.require_data()?)?;
    let (train, test) = match &config.test_data {
        Some(path) => (samples, load_samples(path)?),
        None => {
            let parts = split_dataset(&samples, &config.split_spec())?;
            let mut held_out = parts.validation;
            held_out.extend(parts.test);
            (parts.train, held_out)
        }
    };
    let rows = ablate(
        &train,
        &test,
        &config.train_config(),
        config.ablate_mode,
        config.coverage_target,
    )?;
    let dir = out_dir(config)?;
    write_ablation_csv(create(&dir.join(ABLATION_FILE))?, &rows, config.coverage_target)?;
    Ok(rows)
}
