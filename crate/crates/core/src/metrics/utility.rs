use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::nn::{ModelParams, Samples};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub train_accuracy: f64,
    /// `train_accuracy - accuracy`.
    pub train_test_gap: f64,
}

fn check(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<(), MetricsError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(MetricsError::Input(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.iter().chain(truth).any(|&c| c >= num_classes) {
        return Err(MetricsError::Input(format!(
            "class id out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    let k = pred.iter().chain(truth).max().map_or(1, |m| m + 1);
    check(pred, truth, k)?;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / pred.len() as f64)
}

/// `matrix[true][predicted]` counts.
pub fn confusion_matrix(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<Vec<Vec<usize>>, MetricsError> {
    check(pred, truth, num_classes)?;
    let mut m = vec![vec![0; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    Ok(m)
}

/// F1 of every class; a class with no true samples scores 0.
pub fn per_class_f1(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<Vec<f64>, MetricsError> {
    let m = confusion_matrix(pred, truth, num_classes)?;
    Ok((0..num_classes)
        .map(|k| {
            let tp = m[k][k];
            let support: usize = m[k].iter().sum();
            if support == 0 {
                log::warn!("class {k} is absent from the evaluation labels; its F1 counts as 0");
                return 0.0;
            }
            let predicted: usize = m.iter().map(|row| row[k]).sum();
            let fp = predicted - tp;
            let fn_ = support - tp;
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        })
        .collect())
}

/// Unweighted mean of the per-class F1 scores.
pub fn f1_macro(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64, MetricsError> {
    let f1 = per_class_f1(pred, truth, num_classes)?;
    Ok(f1.iter().sum::<f64>() / num_classes as f64)
}

pub fn utility(params: &ModelParams, train: &Samples, test: &Samples) -> Result<UtilityReport, MetricsError> {
    let k = params.config().num_classes;
    let pred = params.classify(test)?;
    let acc = accuracy(&pred, &test.labels)?;
    let f1 = f1_macro(&pred, &test.labels, k)?;
    let train_pred = params.classify(train)?;
    let train_acc = accuracy(&train_pred, &train.labels)?;
    Ok(UtilityReport {
        accuracy: acc,
        f1_macro: f1,
        train_accuracy: train_acc,
        train_test_gap: train_acc - acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(f1_macro(&y, &y, 3).unwrap(), 1.0);
    }

    #[test]
    fn balanced_binary_confusion() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 0, 1];
        assert_eq!(per_class_f1(&pred, &truth, 2).unwrap(), vec![0.5, 0.5]);
        assert_eq!(f1_macro(&pred, &truth, 2).unwrap(), 0.5);
    }

    #[test]
    fn absent_class_counts_zero() {
        let truth = [0, 0, 1];
        assert_eq!(f1_macro(&truth, &truth, 3).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn random_predictor_near_chance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let k = 4;
        let n = 4000;
        let truth: Vec<usize> = (0..n).map(|i| i % k).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let acc = accuracy(&pred, &truth).unwrap();
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        assert!((acc - 0.25).abs() < 3.0 * sigma, "accuracy {acc}");
    }
}
