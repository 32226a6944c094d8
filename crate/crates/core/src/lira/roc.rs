use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    /// `(fpr, tpr)` points from `(0, 0)` to `(1, 1)`.
    pub roc: Vec<(f64, f64)>,
    pub auc: f64,
    pub tpr_at_fpr_0_1: f64,
    pub tpr_at_fpr_0_001: f64,
}

/// Threshold sweep from the highest score down; tied scores enter together.
pub fn roc_curve(scores: &[f64], truths: &[bool]) -> Result<Vec<(f64, f64)>, String> {
    if scores.len() != truths.len() {
        return Err(format!("{} scores for {} labels", scores.len(), truths.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err("scores contain NaN".into());
    }
    let pos = truths.iter().filter(|&&t| t).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(format!(
            "need members and non-members, got {pos} and {neg}"
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut roc = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truths[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        roc.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(roc)
}

/// TPR at `fpr`, linearly interpolated between the neighbouring points.
/// Where the curve is vertical at `fpr`, the highest TPR is taken.
pub fn tpr_at_fpr(roc: &[(f64, f64)], fpr: f64) -> f64 {
    let mut best: Option<f64> = None;
    for w in roc.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x0 <= fpr && fpr <= x1 {
            let y = if x1 == x0 { y1 } else { y0 + (y1 - y0) * (fpr - x0) / (x1 - x0) };
            best = Some(best.map_or(y, |b: f64| b.max(y)));
        }
    }
    best.unwrap_or_else(|| roc.last().map_or(0.0, |p| p.1))
}

pub fn evaluate_attack(scores: &[f64], truths: &[bool]) -> Result<AttackReport, String> {
    let roc = roc_curve(scores, truths)?;
    let auc = roc
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(AttackReport {
        tpr_at_fpr_0_1: tpr_at_fpr(&roc, 0.1),
        tpr_at_fpr_0_001: tpr_at_fpr(&roc, 0.001),
        auc,
        roc,
    })
}

/// Common FPR grid for averaging curves: linear steps of 0.005 plus a
/// logarithmic run from 1e-4 to 1e-1.
pub fn roc_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    grid.extend((0..=60).map(|j| 10f64.powf(-4.0 + 3.0 * j as f64 / 60.0)));
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    grid
}

/// Vertical average of several curves on [`roc_grid`].
pub fn average_roc(curves: &[&[(f64, f64)]]) -> Vec<(f64, f64)> {
    if curves.is_empty() {
        return Vec::new();
    }
    roc_grid()
        .into_iter()
        .map(|f| {
            let mean = curves.iter().map(|c| tpr_at_fpr(c, f)).sum::<f64>() / curves.len() as f64;
            (f, mean)
        })
        .collect()
}
