//! Confidence estimation for VLM spatial-relation predictions.
//!
//! A VLM's answer to "where is A relative to B?" is checked against the
//! geometry of detected boxes. Four signals (geometric agreement, box
//! separation, detection quality and the VLM's own token confidence) are
//! fused by a small gradient-boosted tree model into `P(VLM correct)`, which
//! then drives threshold selection, selective prediction and scene-graph
//! pruning.
//!
//! - [`records`]: sample data model, JSONL I/O, seeded splits
//! - [`geometry`]: centers, relation classification, geometric features
//! - [`gbdt`]: boosted-tree fusion model
//! - [`evalkit`]: AUROC, Youden threshold, coverage at target accuracy
//! - [`scenegraph`]: per-image graphs and tau sweeps
//! - [`synthgen`]: seeded synthetic scenes with ground truth

pub mod evalkit;
pub mod gbdt;
pub mod geometry;
pub mod records;
pub mod scenegraph;
pub mod synthgen;

pub use gbdt::{GbdtModel, TrainConfig};
pub use geometry::{extract_features, FeatureVector, GeoOutcome};
pub use records::{BoundingBox, Detection, Relation, Sample, VlmPrediction};
