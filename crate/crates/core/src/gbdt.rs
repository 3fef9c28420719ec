//! Regularized gradient-boosted decision trees for binary classification.
//!
//! Second-order boosting on the logistic loss. For a node holding samples
//! with gradient sum `G` and hessian sum `H`:
//!
//! ```text
//! T(G)   = sign(G) * max(0, |G| - l1_alpha)
//! weight = -T(G) / (H + l2_lambda)
//! gain   = 1/2 * [T(G_L)^2/(H_L+l2) + T(G_R)^2/(H_R+l2) - T(G)^2/(H+l2)]
//! ```
//!
//! Splits are found greedily and exactly over every feature, with thresholds
//! at midpoints between consecutive distinct values; a sample goes left when
//! `value < threshold`. Leaves store the unscaled weight; the learning rate
//! is applied at prediction time.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{FeatureVector, FEATURE_NAMES};

pub const MODEL_VERSION: u64 = 1;

// Candidates whose gain is within this relative distance of the best are
// treated as tied and resolved by (feature, threshold) order.
const GAIN_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("degenerate training set: labels contain a single class")]
    DegenerateTrainingSet,
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },
    #[error("non-finite feature value at row {row}, feature {feature}")]
    NonFinite { row: usize, feature: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model version mismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: String, expected: u64 },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub l1_alpha: f64,
    pub l2_lambda: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            learning_rate: 0.03,
            max_depth: 3,
            l1_alpha: 0.5,
            l2_lambda: 2.0,
            min_samples_leaf: 1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.l1_alpha.is_finite() && self.l1_alpha >= 0.0) {
            return bad("l1_alpha must be >= 0");
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be >= 0");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Logistic loss at logit `s`, computed without overflow.
pub fn logistic_loss(s: f64, y: bool) -> f64 {
    let softplus = s.max(0.0) + (-s.abs()).exp().ln_1p();
    if y {
        softplus - s
    } else {
        softplus
    }
}

pub fn gradient(s: f64, y: bool) -> f64 {
    sigmoid(s) - if y { 1.0 } else { 0.0 }
}

pub fn hessian(s: f64) -> f64 {
    let p = sigmoid(s);
    p * (1.0 - p)
}

pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

pub fn leaf_weight(grad_sum: f64, hess_sum: f64, l1_alpha: f64, l2_lambda: f64) -> f64 {
    let w = -soft_threshold(grad_sum, l1_alpha) / (hess_sum + l2_lambda);
    // avoid -0.0 so zero leaves serialize uniformly
    if w == 0.0 {
        0.0
    } else {
        w
    }
}

fn node_score(grad_sum: f64, hess_sum: f64, l1_alpha: f64, l2_lambda: f64) -> f64 {
    let t = soft_threshold(grad_sum, l1_alpha);
    t * t / (hess_sum + l2_lambda)
}

/// Split gain for a parent with sums `(g, h)` divided into a left part `(gl, hl)`.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, l1_alpha: f64, l2_lambda: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (node_score(gl, hl, l1_alpha, l2_lambda) + node_score(gr, hr, l1_alpha, l2_lambda)
        - node_score(g, h, l1_alpha, l2_lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

/// Nodes in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                TreeNode::Leaf { .. } => return idx,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => idx = if row[feature] < threshold { left } else { right },
            }
        }
    }

    /// Unscaled leaf weight for `row`.
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { weight } => weight,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize) -> usize {
            match nodes[idx] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn is_single_leaf(&self) -> bool {
        matches!(self.nodes.as_slice(), [TreeNode::Leaf { .. }])
    }

    fn check(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                TreeNode::Leaf { weight } if !weight.is_finite() => return Err(format!("node {i}: non-finite weight")),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if feature >= n_features {
                        return Err(format!("node {i}: feature index {feature} out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i}: non-finite threshold"));
                    }
                    // preorder layout: children come after their parent
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(format!("node {i}: bad child index"));
                    }
                }
                TreeNode::Leaf { .. } => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub config: TrainConfig,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Operating threshold chosen after training, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_threshold: Option<f64>,
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: u64,
    #[serde(flatten)]
    model: &'a GbdtModel,
}

impl GbdtModel {
    /// A model with no trees; predicts `base_score` everywhere.
    pub fn empty(feature_names: Vec<String>, config: TrainConfig) -> Self {
        Self {
            base_score: 0.5,
            config,
            feature_names,
            trees: Vec::new(),
            decision_threshold: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_logit(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features());
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        logit(self.base_score) + self.config.learning_rate * sum
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.predict_logit(row)).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }

    pub fn predict_features(&self, f: &FeatureVector) -> f64 {
        self.predict_proba(&f.to_array())
    }

    /// Gain-based importance shares, one per feature.
    pub fn feature_importance(&self) -> ImportanceReport {
        let mut gains = vec![0.0; self.n_features()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let TreeNode::Split { feature, gain, .. } = *node {
                    gains[feature] += gain;
                }
            }
        }
        let total: f64 = gains.iter().sum();
        let shares = if total > 0.0 {
            gains.iter().map(|g| g / total).collect()
        } else {
            vec![0.0; gains.len()]
        };
        ImportanceReport {
            features: self.feature_names.clone(),
            shares,
        }
    }

    pub fn to_json(&self) -> String {
        let file = ModelFileRef {
            version: MODEL_VERSION,
            model: self,
        };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, GbdtError> {
        let value: Value = serde_json::from_str(text).map_err(|e| GbdtError::Malformed(e.to_string()))?;
        let Value::Object(mut obj) = value else {
            return Err(GbdtError::Malformed("expected a JSON object".into()));
        };
        match obj.remove("version") {
            None => return Err(GbdtError::Malformed("missing `version`".into())),
            Some(v) if v.as_u64() == Some(MODEL_VERSION) => {}
            Some(v) => {
                return Err(GbdtError::VersionMismatch {
                    found: v.to_string(),
                    expected: MODEL_VERSION,
                })
            }
        }
        let model: GbdtModel =
            serde_json::from_value(Value::Object(obj)).map_err(|e| GbdtError::Malformed(e.to_string()))?;
        if !(model.base_score > 0.0 && model.base_score < 1.0) {
            return Err(GbdtError::Malformed("base_score must lie in (0,1)".into()));
        }
        for (i, tree) in model.trees.iter().enumerate() {
            tree.check(model.n_features())
                .map_err(|e| GbdtError::Malformed(format!("tree {i}: {e}")))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GbdtError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GbdtError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    pub shares: Vec<f64>,
}

impl ImportanceReport {
    pub fn share(&self, name: &str) -> Option<f64> {
        self.features.iter().position(|f| f == name).map(|i| self.shares[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub iteration: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

/// CSV `iteration,train_loss,validation_loss`; the last column is empty
/// when no validation set was given.
pub fn write_train_log<W: Write>(mut w: W, log: &[TrainLogEntry]) -> io::Result<()> {
    writeln!(w, "iteration,train_loss,validation_loss")?;
    for e in log {
        match e.validation_loss {
            Some(v) => writeln!(w, "{},{},{}", e.iteration, e.train_loss, v)?,
            None => writeln!(w, "{},{},", e.iteration, e.train_loss)?,
        }
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Column-major view of the training rows.
struct Columns {
    cols: Vec<Vec<f64>>,
}

impl Columns {
    fn from_rows(rows: &[Vec<f64>], n_features: usize) -> Result<Self, GbdtError> {
        let mut cols = vec![Vec::with_capacity(rows.len()); n_features];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(GbdtError::RaggedRow {
                    row: r,
                    found: row.len(),
                    expected: n_features,
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(GbdtError::NonFinite { row: r, feature: c });
                }
                cols[c].push(v);
            }
        }
        Ok(Self { cols })
    }
}

/// Best split of the samples in `idx`, or `None` when no split has positive gain.
fn best_split(
    cols: &Columns,
    idx: &[usize],
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
) -> Option<SplitCandidate> {
    let (l1, l2) = (config.l1_alpha, config.l2_lambda);
    let g: f64 = idx.iter().map(|&i| grad[i]).sum();
    let h: f64 = idx.iter().map(|&i| hess[i]).sum();
    let min_leaf = config.min_samples_leaf;

    let mut candidates = Vec::new();
    let mut order = idx.to_vec();
    for (feature, col) in cols.cols.iter().enumerate() {
        order.copy_from_slice(idx);
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let (mut gl, mut hl) = (0.0, 0.0);
        for k in 1..order.len() {
            let prev = order[k - 1];
            gl += grad[prev];
            hl += hess[prev];
            let (lo, hi) = (col[prev], col[order[k]]);
            if lo == hi || k < min_leaf || order.len() - k < min_leaf {
                continue;
            }
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold <= lo {
                threshold = hi;
            }
            candidates.push(SplitCandidate {
                feature,
                threshold,
                gain: split_gain(gl, hl, g, h, l1, l2),
            });
        }
    }
    pick_best(&candidates)
}

/// Highest-gain candidate; near-ties go to the lowest feature index, then the
/// lowest threshold. Candidates without positive gain are never chosen.
pub fn pick_best(candidates: &[SplitCandidate]) -> Option<SplitCandidate> {
    let max = candidates.iter().map(|c| c.gain).fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max <= 0.0 {
        return None;
    }
    let floor = max - GAIN_TIE_TOLERANCE * max;
    candidates
        .iter()
        .filter(|c| c.gain >= floor)
        .min_by(|a, b| a.feature.cmp(&b.feature).then(a.threshold.total_cmp(&b.threshold)))
        .copied()
}

fn grow(
    nodes: &mut Vec<TreeNode>,
    cols: &Columns,
    idx: &[usize],
    grad: &[f64],
    hess: &[f64],
    depth: usize,
    config: &TrainConfig,
) -> usize {
    let id = nodes.len();
    let split = if depth < config.max_depth {
        best_split(cols, idx, grad, hess, config)
    } else {
        None
    };
    let Some(split) = split else {
        if depth == 0 {
            nodes.push(TreeNode::Leaf { weight: 0.0 });
            return id;
        }
        let g: f64 = idx.iter().map(|&i| grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| hess[i]).sum();
        nodes.push(TreeNode::Leaf {
            weight: leaf_weight(g, h, config.l1_alpha, config.l2_lambda),
        });
        return id;
    };
    let col = &cols.cols[split.feature];
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| col[i] < split.threshold);
    nodes.push(TreeNode::Leaf { weight: 0.0 });
    let left = grow(nodes, cols, &left_idx, grad, hess, depth + 1, config);
    let right = grow(nodes, cols, &right_idx, grad, hess, depth + 1, config);
    nodes[id] = TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
        gain: split.gain,
    };
    id
}

/// Fit one tree to the given gradients. A root without any positive-gain
/// split yields a single zero leaf.
pub fn fit_tree(rows: &[Vec<f64>], grad: &[f64], hess: &[f64], config: &TrainConfig) -> Result<Tree, GbdtError> {
    let n_features = rows.first().map_or(0, Vec::len);
    let cols = Columns::from_rows(rows, n_features)?;
    Ok(fit_tree_columns(&cols, grad, hess, config))
}

fn fit_tree_columns(cols: &Columns, grad: &[f64], hess: &[f64], config: &TrainConfig) -> Tree {
    let idx: Vec<usize> = (0..grad.len()).collect();
    let mut nodes = Vec::new();
    grow(&mut nodes, cols, &idx, grad, hess, 0, config);
    Tree { nodes }
}

fn mean_loss(logits: &[f64], labels: &[bool]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&s, &y)| logistic_loss(s, y))
        .sum::<f64>()
        / logits.len() as f64
}

fn check_training_set(rows: &[Vec<f64>], labels: &[bool]) -> Result<(), GbdtError> {
    if rows.len() != labels.len() {
        return Err(GbdtError::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    if rows.len() < 2 {
        return Err(GbdtError::TooFewSamples(rows.len()));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(GbdtError::DegenerateTrainingSet);
    }
    Ok(())
}

/// Boosting over arbitrary-width feature rows, with a per-iteration loss log.
pub fn train_rows(
    rows: &[Vec<f64>],
    labels: &[bool],
    feature_names: &[&str],
    config: &TrainConfig,
    validation: Option<(&[Vec<f64>], &[bool])>,
) -> Result<(GbdtModel, Vec<TrainLogEntry>), GbdtError> {
    config.validate()?;
    check_training_set(rows, labels)?;
    let cols = Columns::from_rows(rows, feature_names.len())?;
    if let Some((vrows, vlabels)) = validation {
        if vrows.len() != vlabels.len() {
            return Err(GbdtError::LengthMismatch {
                rows: vrows.len(),
                labels: vlabels.len(),
            });
        }
        Columns::from_rows(vrows, feature_names.len())?;
    }

    let mut model = GbdtModel::empty(feature_names.iter().map(|s| s.to_string()).collect(), config.clone());
    let base = logit(model.base_score);
    let mut logits = vec![base; rows.len()];
    let mut val_logits = validation.map(|(v, _)| vec![base; v.len()]);
    let mut log = Vec::with_capacity(config.n_trees);
    let mut grad = vec![0.0; rows.len()];
    let mut hess = vec![0.0; rows.len()];

    for iteration in 1..=config.n_trees {
        for (i, (&s, &y)) in logits.iter().zip(labels).enumerate() {
            grad[i] = gradient(s, y);
            hess[i] = hessian(s);
        }
        let tree = fit_tree_columns(&cols, &grad, &hess, config);
        for (s, row) in logits.iter_mut().zip(rows) {
            *s += config.learning_rate * tree.predict(row);
        }
        let validation_loss = match (validation, val_logits.as_mut()) {
            (Some((vrows, vlabels)), Some(vl)) => {
                for (s, row) in vl.iter_mut().zip(vrows) {
                    *s += config.learning_rate * tree.predict(row);
                }
                Some(mean_loss(vl, vlabels))
            }
            _ => None,
        };
        log.push(TrainLogEntry {
            iteration,
            train_loss: mean_loss(&logits, labels),
            validation_loss,
        });
        model.trees.push(tree);
    }
    Ok((model, log))
}

/// Train the four-feature fusion model.
pub fn train(features: &[FeatureVector], labels: &[bool], config: &TrainConfig) -> Result<GbdtModel, GbdtError> {
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.to_array().to_vec()).collect();
    train_rows(&rows, labels, &FEATURE_NAMES, config, None).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rows(v: &[[f64; 4]]) -> Vec<Vec<f64>> {
        v.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn all_positive_leaf_arithmetic() {
        // four positives at base 0.5: g = -0.5 each, h = 0.25 each
        let (g, h) = (4.0 * gradient(0.0, true), 4.0 * hessian(0.0));
        assert_eq!((g, h), (-2.0, 1.0));
        assert_eq!(soft_threshold(g, 0.5), -1.5);
        let w = leaf_weight(g, h, 0.5, 2.0);
        assert_eq!(w, 0.5);
        let mut model = GbdtModel::empty(
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            TrainConfig::default(),
        );
        assert_eq!(model.predict_proba(&[0.1, 0.2, 0.3, 0.4]), 0.5);
        model.trees.push(Tree::leaf(w));
        assert_abs_diff_eq!(model.predict_logit(&[0.0; 4]), 0.015, epsilon = 1e-15);
        assert_abs_diff_eq!(model.predict_proba(&[0.0; 4]), sigmoid(0.015), epsilon = 1e-15);
        assert_abs_diff_eq!(model.predict_proba(&[0.0; 4]), 0.50375, epsilon = 1e-5);
    }

    #[test]
    fn single_class_rejected() {
        let x = rows(&[[0.0; 4], [1.0; 4]]);
        let err = train_rows(&x, &[true, true], &FEATURE_NAMES, &TrainConfig::default(), None).unwrap_err();
        assert!(matches!(err, GbdtError::DegenerateTrainingSet));
        assert!(err.to_string().contains("degenerate training set"));
    }

    #[test]
    fn constant_features_give_zero_leaves() {
        let x = rows(&[[0.3; 4]; 6]);
        let y = [true, false, true, true, false, true];
        let (model, _) = train_rows(&x, &y, &FEATURE_NAMES, &TrainConfig::default(), None).unwrap();
        assert_eq!(model.trees.len(), 100);
        assert!(model.trees.iter().all(|t| *t == Tree::leaf(0.0)));
        assert_eq!(model.predict_proba(&[0.3; 4]), 0.5);
        assert!(model.feature_importance().shares.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn separable_set_reaches_perfect_ranking() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 8.0, 0.5, 0.5, 0.5]).collect();
        let y: Vec<bool> = (0..8).map(|i| i >= 4).collect();
        let (model, _) = train_rows(&x, &y, &FEATURE_NAMES, &TrainConfig::default(), None).unwrap();
        let p: Vec<f64> = x.iter().map(|r| model.predict_proba(r)).collect();
        let worst_pos = p[4..].iter().cloned().fold(f64::INFINITY, f64::min);
        let best_neg = p[..4].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(worst_pos > best_neg);
        let imp = model.feature_importance();
        assert_eq!(imp.shares, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn depth_and_tree_count_bounded() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64, (i * 3 % 11) as f64, i as f64])
            .collect();
        let y: Vec<bool> = (0..40).map(|i| (i * 7 % 13) > 5 || i % 5 == 0).collect();
        let cfg = TrainConfig {
            n_trees: 20,
            ..TrainConfig::default()
        };
        let (model, log) = train_rows(&x, &y, &FEATURE_NAMES, &cfg, None).unwrap();
        assert_eq!(model.trees.len(), 20);
        assert_eq!(log.len(), 20);
        assert!(model.trees.iter().all(|t| t.depth() <= 3));
        let total: f64 = model.feature_importance().shares.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn threshold_goes_right_on_equality() {
        let tree = Tree {
            nodes: vec![
                TreeNode::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                },
                TreeNode::Leaf { weight: -1.0 },
                TreeNode::Leaf { weight: 1.0 },
            ],
        };
        assert_eq!(tree.predict(&[0.4999]), -1.0);
        assert_eq!(tree.predict(&[0.5]), 1.0);
    }

    #[test]
    fn pick_best_tie_rules() {
        let c = |feature, threshold, gain| SplitCandidate {
            feature,
            threshold,
            gain,
        };
        assert_eq!(
            pick_best(&[c(2, 0.1, 1.0), c(1, 0.9, 1.0), c(1, 0.3, 1.0)]),
            Some(c(1, 0.3, 1.0))
        );
        assert_eq!(pick_best(&[c(0, 0.1, 0.0), c(1, 0.2, -1.0)]), None);
        assert_eq!(pick_best(&[]), None);
    }

    #[test]
    fn load_rejects_bad_files() {
        let model = GbdtModel::empty(vec!["a".into()], TrainConfig::default());
        let text = model.to_json();
        assert_eq!(GbdtModel::from_json(&text).unwrap(), model);
        assert!(matches!(
            GbdtModel::from_json(&text[..text.len() / 2]),
            Err(GbdtError::Malformed(_))
        ));
        let v2 = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            GbdtModel::from_json(&v2),
            Err(GbdtError::VersionMismatch { .. })
        ));
        let bad_child = r#"{"version":1,"base_score":0.5,"config":{"n_trees":1,"learning_rate":0.03,"max_depth":3,"l1_alpha":0.5,"l2_lambda":2.0,"min_samples_leaf":1,"seed":1},"feature_names":["a"],"trees":[{"nodes":[{"kind":"split","feature":0,"threshold":0.5,"left":0,"right":0,"gain":1.0}]}]}"#;
        assert!(matches!(GbdtModel::from_json(bad_child), Err(GbdtError::Malformed(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            l2_lambda: -1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
