//! Offline likelihood-ratio membership inference against shadow ensembles.

mod roc;
mod score;
mod shadows;

pub use roc::{average_roc, evaluate_attack, roc_curve, roc_grid, tpr_at_fpr, AttackReport};
pub use score::{
    attack_external, fit_out_gaussian, lira_score, logit_scale, round_robin_attack, write_scores_csv,
    OutStatistics, RoundRobinReport, ScoreRow, LOGIT_CLAMP, SIGMA_FLOOR,
};
pub use shadows::{default_workers, sample_membership_masks, train_shadows, ShadowEnsemble, WORKERS_ENV};

use thiserror::Error;

use crate::dp::DpError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum LiraError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shadow model {model} failed to train: {source}")]
    Train {
        model: usize,
        #[source]
        source: DpError,
    },
    #[error("attack evaluation failed for target {target}: {message}")]
    Evaluation { target: usize, message: String },
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Privacy(#[from] DpError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
