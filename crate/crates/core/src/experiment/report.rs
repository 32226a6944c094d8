use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::run::{ExperimentResults, RESULTS_FILE};
use super::ExperimentError;

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r = (x * 1e4).round() / 1e4;
            // Avoid emitting "-0.0".
            let r = if r == 0.0 { 0.0 } else { r };
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every non-integer number rounded to 4 decimals.
pub fn to_json_fixed<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report serializes");
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// Four decimals, `inf` for infinity.
pub fn format_fixed(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let s = format!("{x:.4}");
        if s == "-0.0000" {
            "0.0000".into()
        } else {
            s
        }
    }
}

/// Column order of the summary table.
pub const SUMMARY_COLUMNS: [&str; 19] = [
    "run",
    "variant",
    "epsilon",
    "train_size",
    "num_classes",
    "entropy",
    "jpeg_ratio",
    "png_ratio",
    "jpeg_inverse_ratio",
    "png_inverse_ratio",
    "fdr",
    "in_class_std",
    "noise_multiplier",
    "accuracy",
    "f1_macro",
    "train_test_gap",
    "auc",
    "tpr_at_fpr_0_1",
    "tpr_at_fpr_0_001",
];

/// One `(variant, budget)` line; absent values stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cells: Vec<String>,
}

pub fn summary_rows(run: &str, results: &ExperimentResults) -> Vec<SummaryRow> {
    let opt = |x: Option<f64>| x.map(format_fixed).unwrap_or_default();
    let mut rows = Vec::new();
    for v in &results.variants {
        let ch = v.characteristics.as_ref();
        for b in &v.budgets {
            let u = b.utility.as_ref();
            let a = b.attack.as_ref();
            rows.push(SummaryRow {
                cells: vec![
                    run.to_string(),
                    v.name.clone(),
                    b.epsilon.label(),
                    v.train_size.map(|n| n.to_string()).unwrap_or_default(),
                    v.num_classes.map(|n| n.to_string()).unwrap_or_default(),
                    opt(ch.map(|c| c.mean_entropy)),
                    opt(ch.map(|c| c.jpeg.ratio)),
                    opt(ch.map(|c| c.png.ratio)),
                    opt(ch.map(|c| c.jpeg.inverse_ratio)),
                    opt(ch.map(|c| c.png.inverse_ratio)),
                    opt(ch.map(|c| c.fdr)),
                    opt(ch.map(|c| c.in_class_std)),
                    opt(b.noise_multiplier),
                    opt(u.map(|u| u.accuracy)),
                    opt(u.map(|u| u.f1_macro)),
                    opt(u.map(|u| u.train_test_gap)),
                    opt(a.map(|a| a.auc)),
                    opt(a.map(|a| a.tpr_at_fpr_0_1)),
                    opt(a.map(|a| a.tpr_at_fpr_0_001)),
                ],
            });
        }
    }
    rows
}

pub fn write_summary_csv<W: std::io::Write>(rows: &[SummaryRow], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_COLUMNS)?;
    for row in rows {
        w.write_record(&row.cells)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(run_dir: &Path) -> Result<ExperimentResults, ExperimentError> {
    let text = std::fs::read_to_string(run_dir.join(RESULTS_FILE))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Results(e.to_string()))
}

/// Summary rows of several finished runs, labelled by directory name.
pub fn merge_reports(run_dirs: &[&Path]) -> Result<Vec<SummaryRow>, ExperimentError> {
    let mut rows = Vec::new();
    for dir in run_dirs {
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        rows.extend(summary_rows(&label, &read_results(dir)?));
    }
    Ok(rows)
}
