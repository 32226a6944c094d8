use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::accountant::{calibrate_sigma, epsilon_for};
use super::adam::{AdamConfig, AdamState};
use super::clip::ClippedAccumulator;
use super::DpError;
use crate::nn::{argmax, ExampleCache, ModelConfig, ModelParams, ParamSet, Samples};
use crate::rng;

/// Target `(ε, δ)`. An infinite ε means non-private training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    #[serde(with = "crate::serde_eps")]
    pub epsilon: f64,
    pub delta: f64,
}

pub const DEFAULT_DELTA: f64 = 1e-5;

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, DpError> {
        if !(epsilon > 0.0) {
            return Err(DpError::Config(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DpError::Config(format!("delta {delta} outside (0, 1)")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn non_private() -> Self {
        Self {
            epsilon: f64::INFINITY,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn is_private(&self) -> bool {
        self.epsilon.is_finite()
    }
}

/// Optimizer and batching hyperparameters shared by both training paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 30,
            learning_rate: 0.005,
            clip_norm: 1.0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DpError> {
        if self.batch_size == 0 {
            return Err(DpError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(DpError::Config("learning_rate must be >= 0".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(DpError::Config("clip_norm must be > 0".into()));
        }
        Ok(())
    }
}

/// Fully resolved DP-Adam parameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dataset_size: usize,
}

impl DpConfig {
    /// Calibrate σ so that training `dataset_size` samples meets `budget`.
    pub fn calibrated(
        train: &TrainConfig,
        budget: &PrivacyBudget,
        dataset_size: usize,
    ) -> Result<Self, DpError> {
        let mut cfg = Self {
            clip_norm: train.clip_norm,
            noise_multiplier: 0.0,
            batch_size: train.batch_size,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            dataset_size,
        };
        cfg.validate()?;
        if !budget.is_private() {
            return Err(DpError::Config(
                "cannot calibrate noise for an infinite budget".into(),
            ));
        }
        cfg.noise_multiplier =
            calibrate_sigma(budget.epsilon, budget.delta, cfg.sampling_rate(), cfg.steps())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DpError> {
        if self.dataset_size == 0 {
            return Err(DpError::Input("empty dataset".into()));
        }
        if self.batch_size == 0 {
            return Err(DpError::Config("batch_size must be >= 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(DpError::Config("clip_norm must be > 0".into()));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(DpError::Config("noise_multiplier must be >= 0".into()));
        }
        Ok(())
    }

    /// `q = B / N`, capped at 1.
    pub fn sampling_rate(&self) -> f64 {
        (self.batch_size as f64 / self.dataset_size as f64).min(1.0)
    }

    /// `ceil(N / B) · E`
    pub fn steps(&self) -> u64 {
        (self.dataset_size.div_ceil(self.batch_size) * self.epochs) as u64
    }

    /// ε actually spent at `delta`.
    pub fn epsilon(&self, delta: f64) -> Result<f64, DpError> {
        if self.noise_multiplier == 0.0 {
            return Ok(f64::INFINITY);
        }
        epsilon_for(self.sampling_rate(), self.noise_multiplier, self.steps(), delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainMode {
    NonPrivate,
    Private(DpConfig),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// Running accuracy over the (augmented) training batches of each epoch.
    pub train_accuracy: Vec<f64>,
    /// Held-out accuracy after each epoch, when a test split was supplied.
    pub test_accuracy: Vec<Option<f64>>,
    /// Largest per-example gradient norm after clipping (private runs only).
    pub max_clipped_norm: Option<f64>,
    pub noise_multiplier: f64,
}

/// Train a fresh model. The private path clips each example's gradient,
/// adds calibrated Gaussian noise to the batch sum and takes an Adam step;
/// the non-private path is the same loop with no clipping and no noise.
pub fn train(
    data: &Samples,
    test: Option<&Samples>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mode: &TrainMode,
    seed: u64,
) -> Result<(ModelParams, TrainHistory), DpError> {
    train_config.validate()?;
    if data.is_empty() {
        return Err(DpError::Input("empty training set".into()));
    }
    let (clip_norm, sigma, batch_size, epochs, lr) = match mode {
        TrainMode::NonPrivate => (
            f64::INFINITY,
            0.0,
            train_config.batch_size,
            train_config.epochs,
            train_config.learning_rate,
        ),
        TrainMode::Private(dp) => {
            dp.validate()?;
            (
                dp.clip_norm,
                dp.noise_multiplier,
                dp.batch_size,
                dp.epochs,
                dp.learning_rate,
            )
        }
    };
    if epochs == 0 {
        return Err(DpError::Input("training needs at least one epoch".into()));
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= model_config.num_classes) {
        return Err(DpError::Input(format!(
            "label {bad} out of range for {} classes",
            model_config.num_classes
        )));
    }

    let mut params = ModelParams::init(model_config, seed)?;
    let image_len: usize = model_config.input_shape.iter().product();
    if data.images.item_len() != image_len {
        return Err(DpError::Shape(format!(
            "images have {} values, model expects {image_len}",
            data.images.item_len()
        )));
    }
    let mut adam = AdamState::new(params.params(), train_config.adam);
    let mut data_rng = rng::stream(seed, "train/data");
    let mut noise_rng = rng::stream(seed, "train/noise");
    let mut history = TrainHistory {
        noise_multiplier: sigma,
        ..TrainHistory::default()
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cache = ExampleCache::default();
    let mut grad = ParamSet::zeros_like(params.params());
    let mut max_norm: f64 = 0.0;

    for _ in 0..epochs {
        order.shuffle(&mut data_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(batch_size) {
            let mut acc = ClippedAccumulator::new(params.params(), clip_norm)?;
            for &idx in chunk {
                let flip = data_rng.random_bool(0.5);
                let label = data.labels[idx];
                params.forward_example(data.images.item(idx), flip, &mut cache);
                if argmax(cache.probabilities()) == label {
                    correct += 1;
                }
                grad.fill(0.0);
                loss_sum += params.backward_example(&cache, label, &mut grad);
                acc.add(&mut grad)?;
            }
            max_norm = max_norm.max(acc.max_clipped_norm());
            let update = acc.finish(sigma, &mut noise_rng)?;
            adam.step(params.params_mut(), &update, lr)?;
        }
        if !params.params().is_finite() {
            return Err(DpError::Numeric("parameters diverged".into()));
        }
        history.train_loss.push(loss_sum / data.len() as f64);
        history.train_accuracy.push(correct as f64 / data.len() as f64);
        history.test_accuracy.push(match test {
            Some(t) if !t.is_empty() => Some(params.accuracy(t)?),
            _ => None,
        });
    }
    if matches!(mode, TrainMode::Private(_)) {
        history.max_clipped_norm = Some(max_norm);
    }
    Ok((params, history))
}

/// Resolve `budget` into a training mode for a dataset of `dataset_size`.
pub fn mode_for_budget(
    train_config: &TrainConfig,
    budget: &PrivacyBudget,
    dataset_size: usize,
) -> Result<TrainMode, DpError> {
    if budget.is_private() {
        Ok(TrainMode::Private(DpConfig::calibrated(
            train_config,
            budget,
            dataset_size,
        )?))
    } else {
        Ok(TrainMode::NonPrivate)
    }
}

/// Calibrate (when private) and train in one call.
pub fn train_with_budget(
    data: &Samples,
    test: Option<&Samples>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    budget: &PrivacyBudget,
    seed: u64,
) -> Result<(ModelParams, TrainHistory), DpError> {
    let mode = mode_for_budget(train_config, budget, data.len())?;
    train(data, test, model_config, train_config, &mode, seed)
}
