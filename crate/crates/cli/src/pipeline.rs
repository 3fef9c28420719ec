//! Pipeline stages shared by the subcommands.

use anyhow::{bail, ensure, Result};
use log::warn;
use serde::{Deserialize, Serialize};
use spatial_trust::evalkit::{auroc, coverage_at_accuracy, youden_threshold};
use spatial_trust::gbdt::{train_rows, ImportanceReport, TrainLogEntry};
use spatial_trust::geometry::{extract_features, FEATURE_NAMES};
use spatial_trust::records::{split_dataset, SplitSpec};
use spatial_trust::{FeatureVector, GbdtModel, Sample, TrainConfig};

use crate::config::{AblateMode, ConfidenceSource};

pub fn featurize(samples: &[Sample]) -> Vec<FeatureVector> {
    samples.iter().map(|s| extract_features(s).0).collect()
}

pub fn labels(samples: &[Sample]) -> Vec<bool> {
    samples.iter().map(|s| s.label).collect()
}

pub fn feature_rows(features: &[FeatureVector]) -> Vec<Vec<f64>> {
    features.iter().map(|f| f.to_array().to_vec()).collect()
}

/// Rejects models trained on a different feature layout.
pub fn check_model_features(model: &GbdtModel) -> Result<()> {
    if model.feature_names != FEATURE_NAMES {
        bail!(
            "feature/model mismatch: model expects {:?}, pipeline produces {:?}",
            model.feature_names,
            FEATURE_NAMES
        );
    }
    Ok(())
}

pub fn confidences(samples: &[Sample], model: Option<&GbdtModel>, source: ConfidenceSource) -> Result<Vec<f64>> {
    Ok(match source {
        ConfidenceSource::Oracle => samples.iter().map(|s| if s.label { 1.0 } else { 0.0 }).collect(),
        ConfidenceSource::Token => samples.iter().map(|s| s.prediction.token_confidence).collect(),
        ConfidenceSource::Geometric => featurize(samples).iter().map(|f| f.alpha_geo).collect(),
        ConfidenceSource::Model => {
            let Some(model) = model else {
                bail!("confidence source `model` needs --model");
            };
            check_model_features(model)?;
            featurize(samples).iter().map(|f| model.predict_features(f)).collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_validation: usize,
    pub train_auroc: f64,
    pub validation_auroc: Option<f64>,
    pub threshold: f64,
    /// Which partition the Youden threshold was selected on.
    pub threshold_source: String,
    pub importance: ImportanceReport,
}

pub struct TrainOutcome {
    pub model: GbdtModel,
    pub log: Vec<TrainLogEntry>,
    pub summary: TrainSummary,
}

fn both_classes(labels: &[bool]) -> bool {
    labels.iter().any(|&y| y) && labels.iter().any(|&y| !y)
}

/// Split, fit on the train part, pick the operating threshold on validation.
pub fn train_pipeline(samples: &[Sample], split: &SplitSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    let parts = split_dataset(samples, split)?;
    let train_x = feature_rows(&featurize(&parts.train));
    let train_y = labels(&parts.train);
    let val_x = feature_rows(&featurize(&parts.validation));
    let val_y = labels(&parts.validation);
    let validation = (!val_x.is_empty()).then_some((val_x.as_slice(), val_y.as_slice()));

    let (mut model, log) = train_rows(&train_x, &train_y, &FEATURE_NAMES, config, validation)?;
    let train_scores: Vec<f64> = train_x.iter().map(|r| model.predict_proba(r)).collect();
    let val_scores: Vec<f64> = val_x.iter().map(|r| model.predict_proba(r)).collect();
    let train_auroc = auroc(&train_scores, &train_y)?;

    let (validation_auroc, cut, threshold_source) = if both_classes(&val_y) {
        (
            Some(auroc(&val_scores, &val_y)?),
            youden_threshold(&val_scores, &val_y)?,
            "validation",
        )
    } else {
        warn!("validation partition lacks one class; selecting the threshold on the training partition");
        (None, youden_threshold(&train_scores, &train_y)?, "train")
    };
    model.decision_threshold = Some(cut.threshold);
    let summary = TrainSummary {
        n_train: train_y.len(),
        n_validation: val_y.len(),
        train_auroc,
        validation_auroc,
        threshold: cut.threshold,
        threshold_source: threshold_source.to_string(),
        importance: model.feature_importance(),
    };
    Ok(TrainOutcome { model, log, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub features: Vec<String>,
    pub auroc: f64,
    pub coverage: f64,
}

fn mean_column(rows: &[Vec<f64>], col: usize) -> f64 {
    rows.iter().map(|r| r[col]).sum::<f64>() / rows.len() as f64
}

struct AblationData<'a> {
    train_x: &'a [Vec<f64>],
    train_y: &'a [bool],
    test_x: &'a [Vec<f64>],
    test_y: &'a [bool],
    config: &'a TrainConfig,
    target: f64,
}

impl AblationData<'_> {
    fn fused_row(&self, name: String, keep: &[usize]) -> Result<AblationRow> {
        let pick = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| keep.iter().map(|&c| r[c]).collect()).collect()
        };
        let names: Vec<&str> = keep.iter().map(|&c| FEATURE_NAMES[c]).collect();
        let (model, _) = train_rows(&pick(self.train_x), self.train_y, &names, self.config, None)?;
        let scores: Vec<f64> = pick(self.test_x).iter().map(|r| model.predict_proba(r)).collect();
        Ok(AblationRow {
            configuration: name,
            features: names.iter().map(|s| s.to_string()).collect(),
            auroc: auroc(&scores, self.test_y)?,
            coverage: coverage_at_accuracy(&scores, self.test_y, self.target)?.coverage,
        })
    }
}

/// Full model, each feature removed in turn, and the unfused geometric score.
pub fn ablate(
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    mode: AblateMode,
    target: f64,
) -> Result<Vec<AblationRow>> {
    ensure!(!test.is_empty(), "ablation needs a nonempty evaluation set");
    let train_x = feature_rows(&featurize(train));
    let train_y = labels(train);
    let test_features = featurize(test);
    let test_x = feature_rows(&test_features);
    let test_y = labels(test);
    let all: Vec<usize> = (0..FEATURE_NAMES.len()).collect();

    let data = AblationData {
        train_x: &train_x,
        train_y: &train_y,
        test_x: &test_x,
        test_y: &test_y,
        config,
        target,
    };

    let mut rows = vec![data.fused_row("full".into(), &all)?];
    for removed in all.iter().copied() {
        let name = format!("without_{}", FEATURE_NAMES[removed]);
        let row = match mode {
            AblateMode::Drop => {
                let keep: Vec<usize> = all.iter().copied().filter(|&c| c != removed).collect();
                data.fused_row(name, &keep)?
            }
            AblateMode::Mask => {
                ensure!(!train_x.is_empty(), "ablation needs a nonempty training set");
                let fill = mean_column(&train_x, removed);
                let mask = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
                    rows.iter()
                        .map(|r| {
                            let mut r = r.clone();
                            r[removed] = fill;
                            r
                        })
                        .collect()
                };
                let (masked_train, masked_test) = (mask(&train_x), mask(&test_x));
                let masked = AblationData {
                    train_x: &masked_train,
                    test_x: &masked_test,
                    ..data
                };
                let mut row = masked.fused_row(name, &all)?;
                row.features.retain(|f| f != FEATURE_NAMES[removed]);
                row
            }
        };
        rows.push(row);
    }

    let geo: Vec<f64> = test_features.iter().map(|f| f.alpha_geo).collect();
    rows.push(AblationRow {
        configuration: "geometric_only".into(),
        features: vec![FEATURE_NAMES[0].to_string()],
        auroc: auroc(&geo, &test_y)?,
        coverage: coverage_at_accuracy(&geo, &test_y, target)?.coverage,
    });
    Ok(rows)
}
