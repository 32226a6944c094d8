//! Dataset characteristics and model utility measures.

mod compression;
mod entropy;
mod separability;
mod utility;

pub use compression::{compression_ratio, dataset_compression, Codec, CompressionSummary, JPEG_QUALITY};
pub use entropy::{dataset_entropy, shannon_entropy};
pub use separability::{fdr, fdr_features, in_class_std, in_class_std_features, Fdr};
pub use utility::{accuracy, confusion_matrix, f1_macro, per_class_f1, utility, UtilityReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ImageDataset;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{codec} encoding failed: {message}")]
    Codec { codec: &'static str, message: String },
    #[error(transparent)]
    Model(#[from] NnError),
}

/// Data-level measurements of one dataset's train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCharacteristics {
    pub mean_entropy: f64,
    pub jpeg: CompressionSummary,
    pub png: CompressionSummary,
    /// Infinite when every class collapses to a single point.
    #[serde(with = "crate::serde_eps")]
    pub fdr: f64,
    pub in_class_std: f64,
}

impl DatasetCharacteristics {
    pub fn compute(ds: &ImageDataset) -> Result<Self, MetricsError> {
        Ok(Self {
            mean_entropy: dataset_entropy(ds)?,
            jpeg: dataset_compression(ds, Codec::Lossy)?,
            png: dataset_compression(ds, Codec::Lossless)?,
            fdr: fdr(ds)?.value(),
            in_class_std: in_class_std(ds)?,
        })
    }
}
