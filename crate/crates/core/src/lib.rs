//! Spike-train embeddings for knowledge graphs.
//!
//! Entities are represented by the spike times of a single neuron and
//! relations by per-spike time shifts. The crate provides the abstract
//! interval-parameterized model, an integrate-and-fire realization with
//! closed-form spike times, TransE and RESCAL baselines, a deterministic
//! trainer and filtered link-prediction metrics.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod kg;
pub mod matrix;
pub mod model;
pub mod neuron;
pub mod parallel;
pub mod scoring;
pub mod spiketrain;
pub mod train;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use eval::{evaluate, rank_triple, RankReport};
pub use kg::{KnowledgeGraph, Side, Triple};
pub use matrix::Matrix;
pub use model::{Model, ModelKind, Snapshot};
pub use parallel::Exec;
pub use train::{fit, TrainConfig};
