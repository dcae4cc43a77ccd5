use serde::{Deserialize, Serialize};

use crate::error::{DmdError, Result};
use crate::fusion::{is_non_negative, sentiment_class};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc7: f64,
    pub acc2: f64,
    /// F1 of the non-negative class.
    pub f1: f64,
    pub mae: f64,
    pub n: usize,
}

/// F1 with `true` as the positive class; 1 when there is nothing to find
/// and nothing predicted.
pub fn binary_f1(pred: &[bool], truth: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp + fp + fneg == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

pub fn metrics(preds: &[f64], labels: &[f64]) -> Result<MetricsReport> {
    if preds.is_empty() {
        return Err(DmdError::Data("cannot evaluate an empty dataset".into()));
    }
    if preds.len() != labels.len() {
        return Err(DmdError::shape(
            "metrics",
            format!("{} predictions for {} labels", preds.len(), labels.len()),
        ));
    }
    let n = preds.len() as f64;
    let acc7 = preds
        .iter()
        .zip(labels)
        .filter(|(p, l)| sentiment_class(**p) == sentiment_class(**l))
        .count() as f64
        / n;
    let pb: Vec<bool> = preds.iter().map(|&p| is_non_negative(p)).collect();
    let lb: Vec<bool> = labels.iter().map(|&l| is_non_negative(l)).collect();
    let acc2 = pb.iter().zip(&lb).filter(|(a, b)| a == b).count() as f64 / n;
    let mae = preds.iter().zip(labels).map(|(p, l)| (p - l).abs()).sum::<f64>() / n;
    Ok(MetricsReport {
        acc7,
        acc2,
        f1: binary_f1(&pb, &lb),
        mae,
        n: preds.len(),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
