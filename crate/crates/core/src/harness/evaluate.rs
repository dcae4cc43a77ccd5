use std::path::Path;

use crate::config::{AlignMode, TrainConfig};
use crate::data::{make_batches, resample_aligned, Batch, Sample};
use crate::error::{DmdError, Result};
use crate::fusion::{is_non_negative, sentiment_class};
use crate::graph_distillation::DistillGraph;
use crate::model::{forward, LossReport, SampleFeatures};
use crate::params::{Bound, ParamStore};
use crate::tensor::Tape;

use super::metrics::{metrics, MetricsReport};

/// Applies the aligned-mode resampler where needed.
pub fn prepare(samples: &[Sample], mode: AlignMode) -> Vec<Sample> {
    match mode {
        AlignMode::Aligned => samples
            .iter()
            .map(|s| if s.is_aligned() { s.clone() } else { resample_aligned(s) })
            .collect(),
        AlignMode::Unaligned => samples.to_vec(),
    }
}

/// Fixed-order batches of the prepared samples.
pub fn eval_batches(cfg: &TrainConfig, samples: &[Sample]) -> Result<Vec<Batch>> {
    let prepared = prepare(samples, cfg.mode);
    let order: Vec<usize> = (0..prepared.len()).collect();
    make_batches(&prepared, &order, cfg.batch_size, cfg.mode)
}

/// Everything one inference pass over a dataset produces.
#[derive(Debug, Clone)]
pub struct Inference {
    pub ids: Vec<String>,
    pub labels: Vec<f64>,
    pub features: Vec<SampleFeatures>,
    pub losses: Vec<LossReport>,
    pub homo_graphs: Vec<DistillGraph>,
    pub hetero_graphs: Vec<DistillGraph>,
}

impl Inference {
    pub fn predictions(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.pred).collect()
    }
}

pub fn infer_dataset(store: &ParamStore, cfg: &TrainConfig, samples: &[Sample]) -> Result<Inference> {
    if samples.is_empty() {
        return Err(DmdError::Data("cannot evaluate an empty dataset".into()));
    }
    let mut out = Inference {
        ids: Vec::new(),
        labels: Vec::new(),
        features: Vec::new(),
        losses: Vec::new(),
        homo_graphs: Vec::new(),
        hetero_graphs: Vec::new(),
    };
    for batch in eval_batches(cfg, samples)? {
        let mut tape = Tape::new();
        let mut p = Bound::new(store);
        let fwd = forward(&mut tape, &mut p, &cfg.model, &cfg.weights, &batch)?;
        out.losses.push(fwd.losses.report(&tape));
        out.features.extend(fwd.features(&tape));
        out.homo_graphs.extend(fwd.homo_graphs);
        out.hetero_graphs.extend(fwd.hetero_graphs);
        out.ids.extend(batch.ids);
        out.labels.extend(batch.labels);
    }
    Ok(out)
}

pub fn evaluate(store: &ParamStore, cfg: &TrainConfig, samples: &[Sample]) -> Result<MetricsReport> {
    let inf = infer_dataset(store, cfg, samples)?;
    metrics(&inf.predictions(), &inf.labels)
}

/// Prediction dump with columns
/// `sample_id,score,class7,class2,label,label7,label2`.
pub fn write_predictions(path: &Path, inf: &Inference) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| DmdError::Data(format!("cannot write {}: {e}", path.display())))?;
    let io = |e: csv::Error| DmdError::Data(format!("cannot write {}: {e}", path.display()));
    w.write_record(["sample_id", "score", "class7", "class2", "label", "label7", "label2"])
        .map_err(io)?;
    let bin = |v: f64| if is_non_negative(v) { "non-negative" } else { "negative" };
    for ((id, f), &label) in inf.ids.iter().zip(&inf.features).zip(&inf.labels) {
        w.write_record([
            id.clone(),
            f.pred.to_string(),
            sentiment_class(f.pred).to_string(),
            bin(f.pred).to_string(),
            label.to_string(),
            sentiment_class(label).to_string(),
            bin(label).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
