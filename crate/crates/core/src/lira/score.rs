use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::roc::{average_roc, evaluate_attack, AttackReport};
use super::{LiraError, ShadowEnsemble};

/// Confidences are clamped to `[LOGIT_CLAMP, 1 - LOGIT_CLAMP]` before scaling.
pub const LOGIT_CLAMP: f64 = 1e-7;
/// Smallest standard deviation used when scoring.
pub const SIGMA_FLOOR: f64 = 1e-3;

pub fn logit_scale(p: f64) -> f64 {
    let p = p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (p / (1.0 - p)).ln()
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Mean and unbiased standard deviation of the logit-scaled confidences of
/// `sample` under the models that did not train on it, leaving out
/// `exclude`. `None` when fewer than two such models exist.
pub fn fit_out_gaussian(
    ensemble: &ShadowEnsemble,
    sample: usize,
    exclude: Option<usize>,
) -> Option<(f64, f64)> {
    let logits: Vec<f64> = (0..ensemble.len())
        .filter(|&m| Some(m) != exclude && !ensemble.masks[m][sample])
        .map(|m| logit_scale(ensemble.confidences[m][sample]))
        .collect();
    mean_std(&logits)
}

/// One-sided offline score `Φ((logit(p) - μ) / σ)`; larger means more
/// likely a member.
pub fn lira_score(target_conf: f64, mu_out: f64, sigma_out: f64) -> f64 {
    let z = (logit_scale(target_conf) - mu_out) / sigma_out.max(SIGMA_FLOOR);
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian actually used for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutStatistics {
    pub mean: f64,
    pub std: f64,
    /// The pooled OUT spread replaced a per-sample estimate.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub sample_id: usize,
    /// Ensemble index of the attacked model; empty for an external target.
    pub target_model: Option<usize>,
    pub score: f64,
    pub is_member: bool,
}

/// OUT statistics of every sample from the models in `shadows`.
fn out_statistics(logits: &[Vec<f64>], masks: &[Vec<bool>], shadows: &[usize]) -> Vec<OutStatistics> {
    let size = masks[0].len();
    let pooled: Vec<f64> = shadows
        .iter()
        .flat_map(|&m| (0..size).filter(move |&s| !masks[m][s]).map(move |s| logits[m][s]))
        .collect();
    let (global_mean, global_std) = mean_std(&pooled).unwrap_or((0.0, 1.0));
    (0..size)
        .map(|s| {
            let out: Vec<f64> = shadows
                .iter()
                .filter(|&&m| !masks[m][s])
                .map(|&m| logits[m][s])
                .collect();
            match mean_std(&out) {
                Some((mean, std)) => OutStatistics {
                    mean,
                    std: std.max(SIGMA_FLOOR),
                    fallback: false,
                },
                None => OutStatistics {
                    mean: if out.is_empty() { global_mean } else { out[0] },
                    std: global_std.max(SIGMA_FLOOR),
                    fallback: true,
                },
            }
        })
        .collect()
}

fn score_target(target_logits: &[f64], stats: &[OutStatistics]) -> Vec<f64> {
    target_logits
        .iter()
        .zip(stats)
        .map(|(&l, st)| {
            let z = (l - st.mean) / st.std;
            0.5 * erfc(-z / std::f64::consts::SQRT_2)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRobinReport {
    pub per_target: Vec<AttackReport>,
    pub auc: f64,
    pub tpr_at_fpr_0_1: f64,
    pub tpr_at_fpr_0_001: f64,
    /// Vertical average of the per-target curves.
    pub roc: Vec<(f64, f64)>,
    /// Sample scorings that used the pooled OUT spread.
    pub fallback_count: usize,
    #[serde(skip)]
    pub scores: Vec<ScoreRow>,
}

/// Attack every ensemble member in turn, using the remaining members as
/// shadows, and average the results.
pub fn round_robin_attack(ensemble: &ShadowEnsemble) -> Result<RoundRobinReport, LiraError> {
    let n = ensemble.len();
    if n < 3 {
        return Err(LiraError::Input(format!(
            "round-robin attack needs at least 3 models, got {n}"
        )));
    }
    let logits: Vec<Vec<f64>> = ensemble
        .confidences
        .iter()
        .map(|row| row.iter().map(|&p| logit_scale(p)).collect())
        .collect();
    let mut per_target = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n * ensemble.dataset_size());
    let mut fallback_count = 0;
    for t in 0..n {
        let shadows: Vec<usize> = (0..n).filter(|&m| m != t).collect();
        let stats = out_statistics(&logits, &ensemble.masks, &shadows);
        fallback_count += stats.iter().filter(|s| s.fallback).count();
        let target_scores = score_target(&logits[t], &stats);
        let report = evaluate_attack(&target_scores, &ensemble.masks[t])
            .map_err(|message| LiraError::Evaluation { target: t, message })?;
        for (s, (&score, &is_member)) in target_scores.iter().zip(&ensemble.masks[t]).enumerate() {
            scores.push(ScoreRow {
                sample_id: s,
                target_model: Some(t),
                score,
                is_member,
            });
        }
        per_target.push(report);
    }
    let mean = |f: fn(&AttackReport) -> f64| per_target.iter().map(f).sum::<f64>() / n as f64;
    let curves: Vec<&[(f64, f64)]> = per_target.iter().map(|r| r.roc.as_slice()).collect();
    Ok(RoundRobinReport {
        auc: mean(|r| r.auc),
        tpr_at_fpr_0_1: mean(|r| r.tpr_at_fpr_0_1),
        tpr_at_fpr_0_001: mean(|r| r.tpr_at_fpr_0_001),
        roc: average_roc(&curves),
        fallback_count,
        scores,
        per_target,
    })
}

/// Attack a model outside the ensemble, using every ensemble member as a
/// shadow. Returns the report and the per-sample scores.
pub fn attack_external(
    ensemble: &ShadowEnsemble,
    target_confidences: &[f64],
    target_membership: &[bool],
) -> Result<(AttackReport, Vec<f64>), LiraError> {
    let size = ensemble.dataset_size();
    if target_confidences.len() != size || target_membership.len() != size {
        return Err(LiraError::Input(format!(
            "target covers {} samples, ensemble covers {size}",
            target_confidences.len()
        )));
    }
    if ensemble.len() < 2 {
        return Err(LiraError::Input("external attack needs at least 2 shadows".into()));
    }
    let logits: Vec<Vec<f64>> = ensemble
        .confidences
        .iter()
        .map(|row| row.iter().map(|&p| logit_scale(p)).collect())
        .collect();
    let shadows: Vec<usize> = (0..ensemble.len()).collect();
    let stats = out_statistics(&logits, &ensemble.masks, &shadows);
    let target_logits: Vec<f64> = target_confidences.iter().map(|&p| logit_scale(p)).collect();
    let scores = score_target(&target_logits, &stats);
    let report = evaluate_attack(&scores, target_membership)
        .map_err(|message| LiraError::Evaluation { target: 0, message })?;
    Ok((report, scores))
}

pub fn write_scores_csv<W: std::io::Write>(rows: &[ScoreRow], writer: W) -> Result<(), LiraError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
