use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::dataset::{
    imbalance_linear, imbalance_normal, load_idx, load_image_dir, read_container, reduce_class_count,
    reduce_class_size, synth_generate, to_grayscale, DatasetError, ImageDataset, ImbalanceMode,
    SynthSpec, MODEL_INPUT,
};
use crate::dp::{PrivacyBudget, TrainConfig, DEFAULT_DELTA};
use crate::nn::ModelConfig;
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

/// Where the base dataset comes from. Relative paths are resolved against
/// the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthSpec),
    Idx { path: PathBuf },
    ImageDir { path: PathBuf },
    Container { path: PathBuf },
}

impl DataSource {
    pub fn load(&self, seed: u64) -> Result<ImageDataset, DatasetError> {
        match self {
            DataSource::Synth(spec) => synth_generate(spec, rng::derive_seed(seed, "source/synth")),
            DataSource::Idx { path } => load_idx(path),
            DataSource::ImageDir { path } => load_image_dir(path),
            DataSource::Container { path } => read_container(path),
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            DataSource::Synth(_) => {}
            DataSource::Idx { path } | DataSource::ImageDir { path } | DataSource::Container { path } => {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }
}

/// One dataset modification step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    ClassSize { c: usize },
    ClassCount { n: usize },
    Imbalance { factor: f64, mode: ImbalanceMode },
    Grayscale,
}

impl Operation {
    pub fn apply(&self, ds: &ImageDataset, seed: u64) -> Result<ImageDataset, DatasetError> {
        match *self {
            Operation::ClassSize { c } => reduce_class_size(ds, c, seed),
            Operation::ClassCount { n } => reduce_class_count(ds, n),
            Operation::Imbalance {
                factor,
                mode: ImbalanceMode::Linear,
            } => imbalance_linear(ds, factor, seed),
            Operation::Imbalance {
                factor,
                mode: ImbalanceMode::Normal,
            } => imbalance_normal(ds, factor, seed),
            Operation::Grayscale => to_grayscale(ds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub ops: Vec<Operation>,
}

/// ε of one budget; `"inf"` selects non-private training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epsilon(#[serde(with = "crate::serde_eps")] pub f64);

impl Epsilon {
    pub fn label(self) -> String {
        if self.0.is_infinite() {
            "inf".into()
        } else {
            format!("{}", self.0)
        }
    }
}

/// Convolutional architecture; class count and input shape follow the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub conv_channels: [usize; 3],
    pub kernel_size: usize,
    pub groupnorm_groups: usize,
    pub hidden_units: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            conv_channels: m.conv_channels,
            kernel_size: m.kernel_size,
            groupnorm_groups: m.groupnorm_groups,
            hidden_units: m.hidden_units,
        }
    }
}

impl Architecture {
    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        ModelConfig {
            conv_channels: self.conv_channels,
            kernel_size: self.kernel_size,
            groupnorm_groups: self.groupnorm_groups,
            hidden_units: self.hidden_units,
            num_classes,
            input_shape: MODEL_INPUT,
        }
    }
}

fn default_budgets() -> Vec<Epsilon> {
    vec![Epsilon(f64::INFINITY), Epsilon(30.0), Epsilon(1.0)]
}

fn default_variants() -> Vec<Variant> {
    vec![Variant {
        name: "baseline".into(),
        ops: Vec::new(),
    }]
}

fn default_seed() -> u64 {
    42
}

fn default_shadows() -> usize {
    32
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_shadows")]
    pub shadows: usize,
    #[serde(default = "default_budgets")]
    pub budgets: Vec<Epsilon>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub allow_downscale: bool,
    /// Concurrent shadow trainings; falls back to the environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub source: DataSource,
    #[serde(default)]
    pub model: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a file; relative data paths and the output directory are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.source.resolve(base);
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            ));
        }
        if self.shadows < 3 {
            return bad(format!("shadows must be >= 3, got {}", self.shadows));
        }
        if self.budgets.is_empty() {
            return bad("at least one budget is required".into());
        }
        for b in &self.budgets {
            PrivacyBudget::new(b.0, self.delta).map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        self.train
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.variants.is_empty() {
            return bad("at least one variant is required".into());
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("variant names must be unique".into());
        }
        for v in &self.variants {
            let safe = !v.name.is_empty()
                && v.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
            if !safe {
                return bad(format!(
                    "variant name '{}' must use only ASCII letters, digits, '_', '-' or '.'",
                    v.name
                ));
            }
            for op in &v.ops {
                match *op {
                    Operation::ClassCount { n } if n < 3 => {
                        return bad(format!("class_count n must be >= 3, got {n}"))
                    }
                    Operation::Imbalance { factor, .. } if !(0.0..=1.0).contains(&factor) => {
                        return bad(format!("imbalance factor {factor} outside [0, 1]"))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn budget(&self, eps: Epsilon) -> PrivacyBudget {
        if eps.0.is_infinite() {
            PrivacyBudget {
                delta: self.delta,
                ..PrivacyBudget::non_private()
            }
        } else {
            PrivacyBudget {
                epsilon: eps.0,
                delta: self.delta,
            }
        }
    }

    /// SHA-256 over every field that influences results, i.e. everything
    /// except the output directory and the worker count.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.workers = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
