//! ROC analysis, threshold selection and selective-prediction coverage.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("AUROC undefined: labels contain a single class")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    Ok(())
}

fn check_both_classes(labels: &[bool]) -> Result<(usize, usize), EvalError> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        Err(EvalError::SingleClass)
    } else {
        Ok((pos, neg))
    }
}

/// Indices ordered by descending score; equal scores keep input order.
fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Distinct score groups in descending order: `(score, positives, negatives)`.
fn score_groups(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for i in rank_descending(scores) {
        let (p, n) = if labels[i] { (1, 0) } else { (0, 1) };
        match groups.last_mut() {
            Some(last) if last.0 == scores[i] => {
                last.1 += p;
                last.2 += n;
            }
            _ => groups.push((scores[i], p, n)),
        }
    }
    groups
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_inputs(scores, labels)?;
    let (pos, neg) = check_both_classes(labels)?;
    // count in halves so the tally stays integral
    let mut negatives_below = neg as u128;
    let mut twice_wins: u128 = 0;
    for (_, p, n) in score_groups(scores, labels) {
        negatives_below -= n as u128;
        twice_wins += (p as u128) * (2 * negatives_below + n as u128);
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// ROC points by descending threshold, starting from `(0, 0)` at `+inf`.
/// Each point accepts every sample with `score >= threshold`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>, EvalError> {
    check_inputs(scores, labels)?;
    let (pos, neg) = check_both_classes(labels)?;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (score, p, n) in score_groups(scores, labels) {
        tp += p;
        fp += n;
        points.push(RocPoint {
            threshold: score,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }
    Ok(points)
}

pub fn write_roc_csv<W: Write>(mut w: W, points: &[RocPoint]) -> io::Result<()> {
    writeln!(w, "threshold,tpr,fpr")?;
    for p in points {
        writeln!(w, "{},{},{}", p.threshold, p.tpr, p.fpr)?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoudenCut {
    pub threshold: f64,
    /// Number of distinct score values accepted by the cut.
    pub accepted_groups: usize,
    pub j: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Threshold maximizing `TPR - FPR`.
///
/// Candidate cuts accept the top `k` distinct score values, `k >= 1`. The
/// returned threshold is the midpoint between the lowest accepted and the
/// highest rejected score (or the minimum score when everything is accepted).
/// Ties in J go to the higher threshold.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<YoudenCut, EvalError> {
    check_inputs(scores, labels)?;
    let (pos, neg) = check_both_classes(labels)?;
    let groups = score_groups(scores, labels);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<YoudenCut> = None;
    for (k, &(score, p, n)) in groups.iter().enumerate() {
        tp += p;
        fp += n;
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        let j = tpr - fpr;
        // strict improvement only: earlier cuts have higher thresholds
        if best.is_none_or(|b| j > b.j) {
            let threshold = match groups.get(k + 1) {
                Some(&(next, _, _)) => midpoint_above(next, score),
                None => score,
            };
            best = Some(YoudenCut {
                threshold,
                accepted_groups: k + 1,
                j,
                tpr,
                fpr,
            });
        }
    }
    Ok(best.expect("nonempty input"))
}

// midpoint of lo < hi that still rejects `lo` under `score >= t`
fn midpoint_above(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted_positive: usize,
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

/// Precision/recall/F1 predicting positive iff `score >= threshold`.
pub fn threshold_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ThresholdMetrics, EvalError> {
    check_inputs(scores, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(ThresholdMetrics {
        precision,
        recall,
        f1: harmonic_mean(precision, recall),
        predicted_positive: tp + fp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub target_accuracy: f64,
    pub coverage: f64,
    pub achieved_accuracy: f64,
    pub retained: usize,
}

/// Largest top-scored prefix whose accuracy reaches `target`.
///
/// Ranking is by descending score with ties in input order. Prefix accuracy
/// is not monotone in the prefix length, so every prefix is scanned. When no
/// prefix qualifies the coverage is 0.
pub fn coverage_at_accuracy(scores: &[f64], correctness: &[bool], target: f64) -> Result<CoveragePoint, EvalError> {
    check_inputs(scores, correctness)?;
    let order = rank_descending(scores);
    let n = order.len();
    let mut correct = 0usize;
    let mut best = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if correctness[i] {
            correct += 1;
        }
        let len = k + 1;
        if correct as f64 / len as f64 >= target {
            best = (len, correct);
        }
    }
    let (retained, kept_correct) = best;
    Ok(CoveragePoint {
        target_accuracy: target,
        coverage: if n == 0 { 0.0 } else { retained as f64 / n as f64 },
        achieved_accuracy: if retained == 0 {
            0.0
        } else {
            kept_correct as f64 / retained as f64
        },
        retained,
    })
}

pub fn coverage_curve(scores: &[f64], correctness: &[bool], targets: &[f64]) -> Result<Vec<CoveragePoint>, EvalError> {
    targets
        .iter()
        .map(|&t| coverage_at_accuracy(scores, correctness, t))
        .collect()
}

pub fn write_coverage_csv<W: Write>(mut w: W, points: &[CoveragePoint]) -> io::Result<()> {
    writeln!(w, "target,coverage,achieved_accuracy,retained")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            p.target_accuracy, p.coverage, p.achieved_accuracy, p.retained
        )?;
    }
    w.flush()
}

pub const DEFAULT_COVERAGE_TARGET: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub auroc: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Coverage at 60% target accuracy.
    pub coverage_at_60: f64,
    pub coverage_curve: Vec<CoveragePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Full report at a fixed operating threshold.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64, targets: &[f64]) -> Result<EvalReport, EvalError> {
    let auroc = auroc(scores, labels)?;
    let m = threshold_metrics(scores, labels, threshold)?;
    let coverage_curve = coverage_curve(scores, labels, targets)?;
    let cov60 = coverage_at_accuracy(scores, labels, DEFAULT_COVERAGE_TARGET)?;
    let warnings = coverage_curve
        .iter()
        .chain(std::iter::once(&cov60))
        .filter(|p| p.retained == 0)
        .map(|p| {
            format!(
                "no ranked prefix reaches target accuracy {}; coverage reported as 0",
                p.target_accuracy
            )
        })
        .fold(Vec::<String>::new(), |mut acc, w| {
            if !acc.contains(&w) {
                acc.push(w);
            }
            acc
        });
    Ok(EvalReport {
        n: scores.len(),
        auroc,
        threshold,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        coverage_at_60: cov60.coverage,
        coverage_curve,
        warnings,
    })
}
