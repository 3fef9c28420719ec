//! Run configuration: a flat JSON file whose keys mirror the CLI flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spatial_trust::records::SplitSpec;
use spatial_trust::scenegraph::tau_grid;
use spatial_trust::synthgen::SynthConfig;
use spatial_trust::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblateMode {
    /// Retrain on the reduced feature set.
    #[default]
    Drop,
    /// Keep the model shape, holding the feature at its training mean.
    Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSource {
    /// Fused model probability.
    #[default]
    Model,
    /// The correctness label itself (upper bound).
    Oracle,
    /// VLM token confidence only.
    Token,
    /// Geometric confidence feature only.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,

    // gen
    pub n: usize,
    pub objects_per_image: usize,
    pub detector_noise_sigma: f64,
    pub detection_failure_rate: f64,
    pub base_error_rate: f64,
    pub false_claim_rate: f64,

    // split + train
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub l1_alpha: f64,
    pub l2_lambda: f64,
    pub min_samples_leaf: usize,

    // eval / scenegraph / ablate
    pub threshold: Option<f64>,
    pub confidence_source: ConfidenceSource,
    pub targets: Vec<f64>,
    pub taus: Vec<f64>,
    pub graph_tau: Option<f64>,
    pub coverage_target: f64,
    pub ablate_mode: AblateMode,
    pub timestamp: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let train = TrainConfig::default();
        let split = SplitSpec::default();
        Self {
            data: None,
            test_data: None,
            model: None,
            out: PathBuf::from("out"),
            seed: 42,
            n: synth.n_samples,
            objects_per_image: synth.objects_per_image,
            detector_noise_sigma: synth.detector_noise_sigma,
            detection_failure_rate: synth.detection_failure_rate,
            base_error_rate: synth.vlm_error.base_rate,
            false_claim_rate: synth.false_claim_rate,
            train_fraction: split.train_fraction,
            validation_fraction: split.validation_fraction,
            n_trees: train.n_trees,
            learning_rate: train.learning_rate,
            max_depth: train.max_depth,
            l1_alpha: train.l1_alpha,
            l2_lambda: train.l2_lambda,
            min_samples_leaf: train.min_samples_leaf,
            threshold: None,
            confidence_source: ConfidenceSource::Model,
            targets: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            taus: tau_grid(0.0, 1.0, 0.05),
            graph_tau: None,
            coverage_target: 0.6,
            ablate_mode: AblateMode::Drop,
            timestamp: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn synth_config(&self) -> SynthConfig {
        let base = SynthConfig::default();
        SynthConfig {
            n_samples: self.n,
            objects_per_image: self.objects_per_image,
            detector_noise_sigma: self.detector_noise_sigma,
            detection_failure_rate: self.detection_failure_rate,
            false_claim_rate: self.false_claim_rate,
            vlm_error: spatial_trust::synthgen::VlmErrorModel {
                base_rate: self.base_error_rate,
                ..base.vlm_error
            },
            seed: self.seed,
            ..base
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_trees: self.n_trees,
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            l1_alpha: self.l1_alpha,
            l2_lambda: self.l2_lambda,
            min_samples_leaf: self.min_samples_leaf,
            seed: self.seed,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
        }
    }

    pub fn require_data(&self) -> Result<&Path> {
        match &self.data {
            Some(p) => Ok(p),
            None => bail!("no dataset given (use --data or the `data` config key)"),
        }
    }
}

/// Comma-separated list of numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("not a number: `{s}`")))
        .collect()
}

/// Either a comma list or a grid `start..end:step`.
pub fn parse_taus(text: &str) -> Result<Vec<f64>> {
    let Some((range, step)) = text.split_once(':') else {
        return parse_list(text);
    };
    let Some((start, end)) = range.split_once("..") else {
        bail!("expected `start..end:step`, got `{text}`");
    };
    let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("not a number: `{s}`"));
    let (start, end, step) = (num(start)?, num(end)?, num(step)?);
    if step.is_nan() || step <= 0.0 || end < start {
        bail!("invalid tau grid `{text}`");
    }
    Ok(tau_grid(start, end, step))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_formats() {
        assert_eq!(parse_taus("0,1.1").unwrap(), vec![0.0, 1.1]);
        assert_eq!(parse_taus("0.0..1.0:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_taus("0.0..1.0:0.05").unwrap().len(), 21);
        assert!(parse_taus("0..1:0").is_err());
        assert!(parse_taus("a,b").is_err());
    }

    #[test]
    fn config_keys_are_flat() {
        let cfg: RunConfig = serde_json::from_str(r#"{"n_trees": 10, "seed": 7, "targets": [0.6]}"#).unwrap();
        assert_eq!((cfg.n_trees, cfg.seed, cfg.targets.clone()), (10, 7, vec![0.6]));
        assert_eq!(cfg.learning_rate, 0.03);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
