use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{epoch_order, Prefetcher, Sample};
use crate::error::{DmdError, Result};
use crate::graph_distillation::{DistillGraph, Space};
use crate::model::{forward, LossReport};
use crate::params::{Bound, ParamStore};
use crate::tensor::Tape;

use super::checkpoint;
use super::evaluate::{evaluate, prepare};
use super::metrics::MetricsReport;
use super::optim::Adam;

/// One line of the newline-delimited training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step {
        epoch: usize,
        step: usize,
        losses: LossReport,
    },
    /// Batch-mean edge matrices of one distillation unit.
    Edges {
        step: usize,
        space: Space,
        #[serde(flatten)]
        graph: DistillGraph,
    },
    Epoch {
        epoch: usize,
        step: usize,
        mean_total: f64,
        val: Option<MetricsReport>,
        best: bool,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation MAE (the final ones when there
    /// is no validation set).
    pub best: ParamStore,
    pub last: ParamStore,
    pub best_epoch: usize,
    pub steps: usize,
    pub log: Vec<LogRecord>,
}

impl TrainOutcome {
    pub fn step_losses(&self) -> Vec<LossReport> {
        self.log
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step { losses, .. } => Some(*losses),
                _ => None,
            })
            .collect()
    }
}

fn emit(record: LogRecord, log: &mut Vec<LogRecord>, sink: &mut Option<&mut dyn Write>) -> Result<()> {
    if let Some(w) = sink.as_mut() {
        let line = serde_json::to_string(&record).map_err(|e| DmdError::Numeric(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    log.push(record);
    Ok(())
}

/// Trains from freshly initialized parameters (seeded by `cfg.seed`).
pub fn train(
    cfg: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    let store = ParamStore::init(&cfg.model, cfg.seed);
    train_from(cfg, store, train_set, val_set, sink)
}

/// Minibatch training: forward every enabled component, back-propagate the
/// total objective, take one Adam step. Stops after `cfg.epochs` epochs or
/// `cfg.max_steps` steps, whichever comes first.
pub fn train_from(
    cfg: &TrainConfig,
    mut store: ParamStore,
    train_set: &[Sample],
    val_set: &[Sample],
    mut sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    store.check_against(&cfg.model)?;
    if train_set.is_empty() {
        return Err(DmdError::Data("training set is empty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        s.validate(cfg.model.raw_dims)?;
    }
    let prepared = Arc::new(prepare(train_set, cfg.mode));
    let mut adam = Adam::new(cfg.lr);
    let mut log = Vec::new();
    let mut step = 0usize;
    let mut last_finite: Option<LossReport> = None;
    let mut best = store.clone();
    let mut best_epoch = 0;
    let mut best_mae = f64::INFINITY;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    let planned = (cfg.epochs * prepared.len().div_ceil(cfg.batch_size)).min(max_steps);

    'epochs: for epoch in 0..cfg.epochs {
        if step >= max_steps {
            break;
        }
        let order = epoch_order(prepared.len(), cfg.seed, epoch as u64);
        let batches = Prefetcher::spawn(Arc::clone(&prepared), order, cfg.batch_size, cfg.mode, 2)?;
        let mut epoch_total = 0.0;
        let mut epoch_steps = 0;
        for batch in batches {
            if step >= max_steps {
                break;
            }
            let batch = batch?;
            adam.lr = cfg.lr_schedule.lr_at(cfg.lr, step, planned);
            let mut tape = Tape::new();
            let mut bound = Bound::new(&store);
            let fwd = forward(&mut tape, &mut bound, &cfg.model, &cfg.weights, &batch)?;
            let report = fwd.losses.report(&tape);
            if !report.is_finite() {
                return Err(DmdError::Numeric(format!(
                    "non-finite loss at step {step}: {report:?}; last finite losses: {last_finite:?}"
                )));
            }
            let grads = bound.gradients(&tape.backward(fwd.losses.total)?);
            if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
                return Err(DmdError::Numeric(format!(
                    "non-finite gradient for {name} at step {step}; losses: {report:?}"
                )));
            }
            drop(bound);
            adam.step(&mut store, &grads)?;
            emit(LogRecord::Step { epoch, step, losses: report }, &mut log, &mut sink)?;
            if cfg.log_edges {
                for (space, graphs) in [(Space::Homo, &fwd.homo_graphs), (Space::Hetero, &fwd.hetero_graphs)] {
                    if !graphs.is_empty() {
                        let graph = DistillGraph::mean(graphs);
                        emit(LogRecord::Edges { step, space, graph }, &mut log, &mut sink)?;
                    }
                }
            }
            last_finite = Some(report);
            epoch_total += report.total;
            epoch_steps += 1;
            step += 1;
        }
        let val = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(&store, cfg, val_set)?)
        };
        let score = val.map_or(f64::NEG_INFINITY, |v| v.mae);
        let improved = score <= best_mae || val.is_none();
        if improved {
            best_mae = score;
            best = store.clone();
            best_epoch = epoch;
        }
        emit(
            LogRecord::Epoch {
                epoch,
                step,
                mean_total: epoch_total / epoch_steps.max(1) as f64,
                val,
                best: improved,
            },
            &mut log,
            &mut sink,
        )?;
        log::info!(
            "epoch {epoch}: mean total {:.4}{}",
            epoch_total / epoch_steps.max(1) as f64,
            val.map_or(String::new(), |v| format!(", val mae {:.4} acc2 {:.3}", v.mae, v.acc2))
        );
        if step >= max_steps {
            break 'epochs;
        }
    }
    if let Some(path) = &cfg.checkpoint {
        checkpoint::save(path, cfg, &best)?;
    }
    Ok(TrainOutcome {
        best,
        last: store,
        best_epoch,
        steps: step,
        log,
    })
}
