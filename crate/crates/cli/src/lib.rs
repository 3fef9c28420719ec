//! End-to-end pipeline behind the `spatial-trust` binary: synthetic data
//! generation, fusion-model training, evaluation, scene-graph sweeps and
//! feature ablation.

pub mod commands;
pub mod config;
pub mod pipeline;

pub use config::RunConfig;
