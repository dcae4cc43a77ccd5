//! Linear probes on pooled features.
//!
//! All probes are closed-form ridge regressions on standardized features;
//! classifiers are one-vs-rest over indicator targets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::Sample;
use crate::error::{DmdError, Result};
use crate::fusion::sentiment_class;
use crate::model::SampleFeatures;
use crate::params::ParamStore;

use super::evaluate::infer_dataset;
use super::metrics::{mean_std, metrics, MetricsReport};

pub const DEFAULT_RIDGE: f64 = 1.0;

/// Ridge regression with per-column standardization and an unpenalized
/// intercept.
#[derive(Debug, Clone)]
pub struct Ridge {
    mean: DVector<f64>,
    scale: DVector<f64>,
    /// `features x outputs`.
    weights: DMatrix<f64>,
    intercept: DVector<f64>,
}

impl Ridge {
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], lambda: f64) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(DmdError::Data(format!("ridge: {n} inputs for {} targets", y.len())));
        }
        let p = x[0].len();
        let k = y[0].len();
        if x.iter().any(|r| r.len() != p) || y.iter().any(|r| r.len() != k) {
            return Err(DmdError::shape("ridge", "ragged design matrix"));
        }
        let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
        let ym = DMatrix::from_fn(n, k, |i, j| y[i][j]);
        let mean = DVector::from_fn(p, |j, _| xm.column(j).mean());
        let scale = DVector::from_fn(p, |j, _| {
            let sd = xm.column(j).add_scalar(-mean[j]).norm() / (n as f64).sqrt();
            if sd > 1e-12 { sd } else { 1.0 }
        });
        let xs = DMatrix::from_fn(n, p, |i, j| (xm[(i, j)] - mean[j]) / scale[j]);
        let y_mean = DVector::from_fn(k, |j, _| ym.column(j).mean());
        let yc = DMatrix::from_fn(n, k, |i, j| ym[(i, j)] - y_mean[j]);
        let mut gram = xs.transpose() * &xs;
        for j in 0..p {
            gram[(j, j)] += lambda;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| DmdError::Numeric("ridge: normal equations are not positive definite".into()))?;
        let weights = chol.solve(&(xs.transpose() * yc));
        Ok(Self {
            mean,
            scale,
            weights,
            intercept: y_mean,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let xs = DVector::from_fn(self.mean.len(), |j, _| (x[j] - self.mean[j]) / self.scale[j]);
        (self.weights.transpose() * xs + &self.intercept).iter().copied().collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// One-vs-rest ridge classifier; returns test accuracy.
pub fn classifier_accuracy(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    classes: usize,
    lambda: f64,
) -> Result<f64> {
    if test_x.is_empty() {
        return Err(DmdError::Data("probe: empty test set".into()));
    }
    let onehot: Vec<Vec<f64>> = train_y
        .iter()
        .map(|&c| (0..classes).map(|k| if k == c { 1.0 } else { 0.0 }).collect())
        .collect();
    let model = Ridge::fit(train_x, &onehot, lambda)?;
    let hits = test_x
        .iter()
        .zip(test_y)
        .filter(|(x, &y)| argmax(&model.predict(x)) == y)
        .count();
    Ok(hits as f64 / test_x.len() as f64)
}

fn class_index(label: f64) -> usize {
    (sentiment_class(label) + 3) as usize
}

/// Pooled homogeneous vectors of all three modalities, each labelled with
/// its sample's 7-class sentiment bin, fed to one shared classifier.
pub fn homo_class_probe(
    train: (&[SampleFeatures], &[f64]),
    test: (&[SampleFeatures], &[f64]),
    lambda: f64,
) -> Result<f64> {
    let stack = |(feats, labels): (&[SampleFeatures], &[f64])| {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (f, &l) in feats.iter().zip(labels) {
            for h in &f.homo {
                x.push(h.clone());
                y.push(class_index(l));
            }
        }
        (x, y)
    };
    let (tx, ty) = stack(train);
    let (vx, vy) = stack(test);
    classifier_accuracy(&tx, &ty, &vx, &vy, 7, lambda)
}

/// Classifies which modality each pooled heterogeneous vector came from.
/// `None` when the model has no heterogeneous features.
pub fn modality_probe(train: &[SampleFeatures], test: &[SampleFeatures], lambda: f64) -> Result<Option<f64>> {
    let stack = |feats: &[SampleFeatures]| -> Option<(Vec<Vec<f64>>, Vec<usize>)> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for f in feats {
            for (m, h) in f.hetero.as_ref()?.iter().enumerate() {
                x.push(h.clone());
                y.push(m);
            }
        }
        Some((x, y))
    };
    match (stack(train), stack(test)) {
        (Some((tx, ty)), Some((vx, vy))) => classifier_accuracy(&tx, &ty, &vx, &vy, 3, lambda).map(Some),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnimodalReport {
    /// Indexed L, V, A.
    pub per_modality: [MetricsReport; 3],
    pub mean_acc2: f64,
    pub std_acc2: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
}

impl UnimodalReport {
    pub fn from_reports(per_modality: [MetricsReport; 3]) -> Self {
        let (mean_acc2, std_acc2) = mean_std(&per_modality.map(|r| r.acc2));
        let (mean_f1, std_f1) = mean_std(&per_modality.map(|r| r.f1));
        Self {
            per_modality,
            mean_acc2,
            std_acc2,
            mean_f1,
            std_f1,
        }
    }
}

/// Per-modality ridge regression of the label on pooled homogeneous
/// features, fit on `train` and scored on `test`.
pub fn unimodal_probe(
    train: (&[SampleFeatures], &[f64]),
    test: (&[SampleFeatures], &[f64]),
    lambda: f64,
) -> Result<UnimodalReport> {
    let mut reports = Vec::with_capacity(3);
    for m in 0..3 {
        let x: Vec<Vec<f64>> = train.0.iter().map(|f| f.homo[m].clone()).collect();
        let y: Vec<Vec<f64>> = train.1.iter().map(|&l| vec![l]).collect();
        let model = Ridge::fit(&x, &y, lambda)?;
        let preds: Vec<f64> = test.0.iter().map(|f| model.predict(&f.homo[m])[0]).collect();
        reports.push(metrics(&preds, test.1)?);
    }
    Ok(UnimodalReport::from_reports([reports[0], reports[1], reports[2]]))
}

/// Runs the model over both sets and probes each modality.
pub fn probe_unimodal(
    store: &ParamStore,
    cfg: &TrainConfig,
    train: &[Sample],
    test: &[Sample],
) -> Result<UnimodalReport> {
    let a = infer_dataset(store, cfg, train)?;
    let b = infer_dataset(store, cfg, test)?;
    unimodal_probe((&a.features, &a.labels), (&b.features, &b.labels), DEFAULT_RIDGE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(homo: [Vec<f64>; 3]) -> SampleFeatures {
        SampleFeatures {
            pred: 0.0,
            homo,
            hetero: None,
            reinforced: None,
        }
    }

    #[test]
    fn ridge_recovers_a_linear_map() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, ((i * 7) % 11) as f64]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![2.0 * r[0] - 3.0 * r[1] + 1.0]).collect();
        let m = Ridge::fit(&x, &y, 1e-9).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert!((m.predict(r)[0] - t[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn ridge_handles_constant_columns() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 5.0]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0]]).collect();
        let m = Ridge::fit(&x, &y, 1e-9).unwrap();
        assert!((m.predict(&[3.0, 5.0])[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn perfect_features_give_unit_acc2_and_zero_std() {
        let labels: Vec<f64> = (0..30).map(|i| (i as f64 - 14.5) / 5.0).collect();
        let feats: Vec<SampleFeatures> = labels.iter().map(|&l| feat([vec![l], vec![2.0 * l], vec![-l]])).collect();
        let r = unimodal_probe((&feats, &labels), (&feats, &labels), 1e-6).unwrap();
        for m in &r.per_modality {
            assert_eq!(m.acc2, 1.0);
        }
        assert_eq!(r.std_acc2, 0.0);
        assert_eq!(r.mean_acc2, 1.0);
    }

    #[test]
    fn modality_probe_is_none_without_hetero() {
        let f = vec![feat([vec![0.0], vec![1.0], vec![2.0]])];
        assert_eq!(modality_probe(&f, &f, 1.0).unwrap(), None);
    }

    #[test]
    fn modality_probe_separates_offset_clusters() {
        let f: Vec<SampleFeatures> = (0..20)
            .map(|i| {
                let e = (i as f64 * 0.37).sin() * 0.1;
                SampleFeatures {
                    hetero: Some([vec![1.0 + e, 0.0], vec![0.0, 1.0 - e], vec![-1.0, -1.0 + e]]),
                    ..feat([vec![0.0], vec![0.0], vec![0.0]])
                }
            })
            .collect();
        assert_eq!(modality_probe(&f, &f, 1e-3).unwrap(), Some(1.0));
    }
}
