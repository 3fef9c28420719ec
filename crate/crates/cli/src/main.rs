use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use spatial_trust_cli::commands;
use spatial_trust_cli::config::{parse_list, parse_taus, AblateMode, ConfidenceSource};
use spatial_trust_cli::RunConfig;

#[derive(Parser)]
#[command(
    name = "spatial-trust",
    version,
    about = "Confidence estimation for VLM spatial predictions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset plus its ground-truth sidecar.
    Gen,
    /// Train the fusion model and pick the operating threshold.
    Train,
    /// Evaluate confidences on a dataset (AUROC, threshold metrics, coverage).
    Eval,
    /// Build scene graphs and sweep the edge threshold.
    Scenegraph,
    /// Retrain with each feature removed and compare.
    Ablate,
}

/// Flags override values from `--config`.
#[derive(Args)]
struct Overrides {
    /// JSON config file with flat keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Input dataset (JSONL).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Evaluation dataset for `ablate`.
    #[arg(long, global = true)]
    test_data: Option<PathBuf>,
    /// Model file for `eval` and `scenegraph`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Number of samples for `gen`.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    failure_rate: Option<f64>,
    #[arg(long, global = true)]
    base_error: Option<f64>,
    #[arg(long, global = true)]
    noise_sigma: Option<f64>,
    #[arg(long, global = true)]
    false_claim_rate: Option<f64>,
    #[arg(long, global = true)]
    n_trees: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    max_depth: Option<usize>,
    /// Operating threshold; defaults to the one stored in the model.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Where confidences come from.
    #[arg(long, global = true, value_enum)]
    source: Option<ConfidenceSource>,
    /// Comma-separated target accuracies, e.g. 0.5,0.6,0.7,0.8.
    #[arg(long, global = true)]
    targets: Option<String>,
    /// Edge thresholds: a comma list or a grid `0.0..1.0:0.05`.
    #[arg(long, global = true)]
    taus: Option<String>,
    /// Threshold used for the exported graphs.
    #[arg(long, global = true)]
    graph_tau: Option<f64>,
    #[arg(long, global = true)]
    coverage_target: Option<f64>,
    #[arg(long, global = true, value_enum)]
    ablate_mode: Option<AblateMode>,
    /// Omit wall-clock timestamps so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    no_timestamp: bool,
}

impl Overrides {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(seed => seed, out => out, n => n, failure_rate => detection_failure_rate,
             base_error => base_error_rate, noise_sigma => detector_noise_sigma,
             false_claim_rate => false_claim_rate, n_trees => n_trees,
             learning_rate => learning_rate, max_depth => max_depth,
             source => confidence_source, coverage_target => coverage_target,
             ablate_mode => ablate_mode);
        if self.data.is_some() {
            cfg.data = self.data;
        }
        if self.test_data.is_some() {
            cfg.test_data = self.test_data;
        }
        if self.model.is_some() {
            cfg.model = self.model;
        }
        if self.threshold.is_some() {
            cfg.threshold = self.threshold;
        }
        if self.graph_tau.is_some() {
            cfg.graph_tau = self.graph_tau;
        }
        if let Some(t) = &self.targets {
            cfg.targets = parse_list(t)?;
        }
        if let Some(t) = &self.taus {
            cfg.taus = parse_taus(t)?;
        }
        if self.no_timestamp {
            cfg.timestamp = false;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Gen => {
            let out = commands::cmd_gen(&cfg)?;
            println!("wrote {} samples to {}", out.n_samples, out.data.display());
        }
        Command::Train => {
            let s = commands::cmd_train(&cfg)?;
            println!(
                "train AUROC {:.4}, validation AUROC {}, threshold {:.4}",
                s.train_auroc,
                s.validation_auroc.map_or("n/a".to_string(), |v| format!("{v:.4}")),
                s.threshold
            );
        }
        Command::Eval => {
            let r = commands::cmd_eval(&cfg)?;
            println!(
                "AUROC {:.4}  P {:.3}  R {:.3}  F1 {:.3}  Cov@60% {:.3}",
                r.auroc, r.precision, r.recall, r.f1, r.coverage_at_60
            );
        }
        Command::Scenegraph => {
            let rows = commands::cmd_scenegraph(&cfg)?;
            println!("swept {} thresholds", rows.len());
        }
        Command::Ablate => {
            for row in commands::cmd_ablate(&cfg)? {
                println!(
                    "{:<28} AUROC {:.4}  coverage {:.3}",
                    row.configuration, row.auroc, row.coverage
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPATIAL_TRUST_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
