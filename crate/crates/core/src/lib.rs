//! Privacy auditing of image classifiers: dataset characteristics and
//! modifications, DP-Adam training with an RDP accountant, and offline
//! likelihood-ratio membership inference.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod dp;
pub mod experiment;
pub mod lira;
pub mod metrics;
pub mod nn;
pub mod rng;
mod serde_eps;

pub use dataset::{ClassHistogram, DatasetError, ImageDataset, Split, SplitKind};
pub use dp::{DpConfig, DpError, PrivacyBudget, TrainConfig, TrainHistory, TrainMode};
pub use experiment::{ExperimentConfig, ExperimentError, ExperimentResults, RunManifest};
pub use lira::{AttackReport, LiraError, ShadowEnsemble};
pub use metrics::{DatasetCharacteristics, MetricsError, UtilityReport};
pub use nn::{ModelConfig, ModelParams, NnError, Samples, Tensor};
