//! Reproducible experiment runs: dataset variants × privacy budgets, each
//! with a utility evaluation and a shadow-model attack.

mod config;
mod report;
mod run;

pub use config::{Architecture, DataSource, Epsilon, ExperimentConfig, Operation, Variant, SCHEMA_VERSION};
pub use report::{
    format_fixed, merge_reports, read_results, summary_rows, to_json_fixed, write_summary_csv, SummaryRow,
    SUMMARY_COLUMNS,
};
pub use run::{
    run_experiment, AttackSummary, BudgetResult, ExperimentResults, RunManifest, StageRecord, StageStatus,
    TargetSummary, VariantResult,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed results file: {0}")]
    Results(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
