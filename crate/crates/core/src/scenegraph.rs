//! Per-image scene graphs with confidence-pruned relation edges.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::{coverage_at_accuracy, harmonic_mean, EvalError};
use crate::records::{Relation, Sample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("{samples} samples but {confidences} confidences")]
    LengthMismatch { samples: usize, confidences: usize },
    #[error("confidence {value} at index {index} is outside [0,1]")]
    ConfidenceOutOfRange { index: usize, value: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "s")]
    pub subject: String,
    #[serde(rename = "r")]
    pub relation: Relation,
    #[serde(rename = "o")]
    pub object: String,
    pub confidence: f64,
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub image_id: String,
    pub vertices: BTreeSet<String>,
    pub edges: Vec<Edge>,
}

fn check_confidences(samples: &[Sample], confidences: &[f64]) -> Result<(), GraphError> {
    if samples.len() != confidences.len() {
        return Err(GraphError::LengthMismatch {
            samples: samples.len(),
            confidences: confidences.len(),
        });
    }
    if let Some((index, &value)) = confidences.iter().enumerate().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
        return Err(GraphError::ConfidenceOutOfRange { index, value });
    }
    Ok(())
}

/// One graph per image (in order of first appearance). Every object named
/// by a sample is a vertex; the VLM's relation becomes an edge when its
/// confidence is at least `tau`.
pub fn build_graphs(samples: &[Sample], confidences: &[f64], tau: f64) -> Result<Vec<SceneGraph>, GraphError> {
    check_confidences(samples, confidences)?;
    let mut graphs: Vec<SceneGraph> = Vec::new();
    let mut by_image: HashMap<&str, usize> = HashMap::new();
    for (s, &confidence) in samples.iter().zip(confidences) {
        let slot = *by_image.entry(s.image_id.as_str()).or_insert_with(|| {
            graphs.push(SceneGraph {
                image_id: s.image_id.clone(),
                vertices: BTreeSet::new(),
                edges: Vec::new(),
            });
            graphs.len() - 1
        });
        let graph = &mut graphs[slot];
        graph.vertices.insert(s.object_1.clone());
        graph.vertices.insert(s.object_2.clone());
        if confidence >= tau {
            graph.edges.push(Edge {
                subject: s.object_1.clone(),
                relation: s.prediction.relation,
                object: s.object_2.clone(),
                confidence,
                correct: Some(s.label),
            });
        }
    }
    Ok(graphs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub tau: f64,
    pub precision: f64,
    pub edge_coverage: f64,
    /// Harmonic mean of precision and edge coverage.
    pub f1: f64,
    pub retained: usize,
    pub total: usize,
}

fn metrics_for(tau: f64, retained: usize, correct: usize, total: usize) -> GraphMetrics {
    let precision = if retained == 0 {
        0.0
    } else {
        correct as f64 / retained as f64
    };
    let edge_coverage = if total == 0 {
        0.0
    } else {
        retained as f64 / total as f64
    };
    GraphMetrics {
        tau,
        precision,
        edge_coverage,
        f1: harmonic_mean(precision, edge_coverage),
        retained,
        total,
    }
}

/// Edge precision and coverage at each `tau`.
pub fn sweep_tau(samples: &[Sample], confidences: &[f64], taus: &[f64]) -> Result<Vec<GraphMetrics>, GraphError> {
    check_confidences(samples, confidences)?;
    Ok(taus
        .iter()
        .map(|&tau| {
            let (retained, correct) = samples
                .iter()
                .zip(confidences)
                .filter(|(_, &c)| c >= tau)
                .fold((0, 0), |(r, k), (s, _)| (r + 1, k + usize::from(s.label)));
            metrics_for(tau, retained, correct, samples.len())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: f64,
    pub metrics: GraphMetrics,
}

/// Operating points chosen by target accuracy rather than fixed `tau`: the
/// largest confidence-ranked edge set reaching `target`. The reported `tau`
/// is the lowest retained confidence, or infinity when nothing is kept.
pub fn sweep_targets(
    samples: &[Sample],
    confidences: &[f64],
    targets: &[f64],
) -> Result<Vec<TargetMetrics>, GraphError> {
    check_confidences(samples, confidences)?;
    let labels: Vec<bool> = samples.iter().map(|s| s.label).collect();
    let mut ranked: Vec<f64> = confidences.to_vec();
    ranked.sort_by(|a, b| b.total_cmp(a));
    targets
        .iter()
        .map(|&target| {
            let p = coverage_at_accuracy(confidences, &labels, target)?;
            let correct = (p.achieved_accuracy * p.retained as f64).round() as usize;
            let tau = if p.retained == 0 {
                f64::INFINITY
            } else {
                ranked[p.retained - 1]
            };
            Ok(TargetMetrics {
                target,
                metrics: metrics_for(tau, p.retained, correct, samples.len()),
            })
        })
        .collect()
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[GraphMetrics]) -> io::Result<()> {
    writeln!(w, "tau,precision,coverage,f1,retained,total")?;
    for m in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.tau, m.precision, m.edge_coverage, m.f1, m.retained, m.total
        )?;
    }
    w.flush()
}

pub fn write_target_csv<W: Write>(mut w: W, rows: &[TargetMetrics]) -> io::Result<()> {
    writeln!(w, "target,tau,precision,coverage,f1,retained,total")?;
    for t in rows {
        let m = &t.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.target, m.tau, m.precision, m.edge_coverage, m.f1, m.retained, m.total
        )?;
    }
    w.flush()
}

/// `taus` as an inclusive grid `start, start+step, ..., <= end`.
pub fn tau_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    if step.is_nan() || step <= 0.0 || end < start {
        return vec![start];
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // round to the step's precision so 0.15 prints as 0.15
    (0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{Detection, VlmPrediction};

    fn sample(id: usize, image: &str, label: bool) -> Sample {
        Sample {
            sample_id: format!("s{id}"),
            image_id: image.into(),
            object_1: format!("a{id}"),
            object_2: "table".into(),
            claimed_relation: Relation::Left,
            prediction: VlmPrediction::new(Relation::Above, 0.5).unwrap(),
            detection_1: Detection::new(format!("a{id}"), 0.9, None).unwrap(),
            detection_2: Detection::new("table", 0.9, None).unwrap(),
            label,
            image_width: None,
            image_height: None,
        }
    }

    #[test]
    fn threshold_semantics() {
        let samples = vec![sample(0, "img", true), sample(1, "img", false)];
        let graphs = build_graphs(&samples, &[0.7, 0.3], 0.5).unwrap();
        assert_eq!(graphs.len(), 1);
        assert_eq!(graphs[0].edges.len(), 1);
        assert_eq!(graphs[0].edges[0].subject, "a0");
        assert_eq!(graphs[0].edges[0].relation, Relation::Above);
        assert_eq!(graphs[0].vertices.len(), 3);

        let all = build_graphs(&samples, &[0.7, 0.3], 0.0).unwrap();
        assert_eq!(all[0].edges.len(), 2);
        let none = build_graphs(&samples, &[0.7, 0.3], 0.71).unwrap();
        assert!(none[0].edges.is_empty());
        assert_eq!(none[0].vertices.len(), 3);
    }

    #[test]
    fn graphs_split_by_image() {
        let samples = vec![sample(0, "b", true), sample(1, "a", true), sample(2, "b", false)];
        let graphs = build_graphs(&samples, &[1.0, 1.0, 1.0], 0.0).unwrap();
        let ids: Vec<_> = graphs.iter().map(|g| g.image_id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        assert_eq!(graphs[0].edges.len(), 2);
    }

    #[test]
    fn errors() {
        let samples = vec![sample(0, "img", true)];
        assert!(matches!(
            build_graphs(&samples, &[], 0.5),
            Err(GraphError::LengthMismatch { .. })
        ));
        assert!(matches!(
            build_graphs(&samples, &[1.5], 0.5),
            Err(GraphError::ConfidenceOutOfRange { .. })
        ));
    }

    #[test]
    fn sweep_with_oracle_confidences() {
        let labels = [true, false, true, true, false];
        let samples: Vec<Sample> = labels.iter().enumerate().map(|(i, &l)| sample(i, "img", l)).collect();
        let conf: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let rows = sweep_tau(&samples, &conf, &[0.0, 0.5, 1.1]).unwrap();
        assert_eq!(rows[0].edge_coverage, 1.0);
        assert_eq!(rows[1].precision, 1.0);
        assert_eq!(rows[1].edge_coverage, 0.6);
        assert_eq!((rows[2].retained, rows[2].precision), (0, 0.0));
        let t = sweep_targets(&samples, &conf, &[1.0]).unwrap();
        assert_eq!(
            (t[0].metrics.retained, t[0].metrics.precision, t[0].metrics.tau),
            (3, 1.0, 1.0)
        );
    }

    #[test]
    fn all_correct_edges_are_precise() {
        let samples: Vec<Sample> = (0..6).map(|i| sample(i, "img", true)).collect();
        let conf = [0.1, 0.3, 0.5, 0.7, 0.9, 0.2];
        for m in sweep_tau(&samples, &conf, &tau_grid(0.0, 1.0, 0.1)).unwrap() {
            if m.retained > 0 {
                assert_eq!(m.precision, 1.0);
            }
        }
    }

    #[test]
    fn grid() {
        assert_eq!(tau_grid(0.0, 1.0, 0.25), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(tau_grid(0.0, 1.0, 0.05).len(), 21);
        assert_eq!(tau_grid(0.0, 1.0, 0.05)[3], 0.15);
    }

    #[test]
    fn export_shapes() {
        let samples = vec![sample(0, "img", true)];
        let g = build_graphs(&samples, &[0.8], 0.5).unwrap();
        let v = serde_json::to_value(&g[0]).unwrap();
        assert_eq!(v["edges"][0]["s"], "a0");
        assert_eq!(v["edges"][0]["r"], "above");
        assert_eq!(v["edges"][0]["o"], "table");
        assert_eq!(v["edges"][0]["correct"], true);
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &sweep_tau(&samples, &[0.8], &[0.5]).unwrap()).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "tau,precision,coverage,f1,retained,total\n0.5,1,1,1,1,1\n"
        );
    }
}
