//! Differentially private training: per-example clipping, Gaussian noise,
//! Adam updates and an RDP accountant for noise calibration.

mod accountant;
mod adam;
mod clip;
mod train;

pub use accountant::{
    calibrate_sigma, compute_rdp, default_orders, epsilon_for, rdp_single_step, rdp_to_eps,
    rdp_to_eps_with, AccountantState, Conversion, SIGMA_SEARCH_BOUNDS,
};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use clip::{clip_gradient, clip_in_place, noisy_aggregate, ClippedAccumulator};
pub use train::{
    mode_for_budget, train, train_with_budget, DpConfig, PrivacyBudget, TrainConfig,
    TrainHistory, TrainMode, DEFAULT_DELTA,
};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("zero noise with subsampling gives an infinite privacy budget")]
    InfiniteBudget,
    #[error("noise calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Model(#[from] NnError),
}
