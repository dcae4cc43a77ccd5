//! Batch forward pass wiring every component according to the ablation
//! toggles, plus the per-component loss bookkeeping.
//!
//! Each sample runs on its own padded sequences with its true lengths;
//! per-sample terms (reconstruction, cycle, orthogonality, both
//! distillation losses) are averaged over the batch. The margin loss is
//! computed jointly over the batch's `3B` pooled homogeneous vectors.

use serde::{Deserialize, Serialize};

use crate::config::{LossWeights, ModelConfig};
use crate::crossmodal::reinforce_all;
use crate::data::Batch;
use crate::decoupling::{
    decouple, loss_cyc, loss_dec, loss_margin, loss_ort, loss_rec, margin_classes, shallow_encode, synthesize,
};
use crate::error::{DmdError, Result};
use crate::fusion::{fuse, head, task_loss, total_loss};
use crate::graph_distillation::{hetero_gd, homo_gd, DistillGraph};
use crate::modality::Modality;
use crate::params::Bound;
use crate::tensor::{Tape, Tensor, Var};

/// Tape handles for every loss term. Disabled terms are `None`.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub task: Var,
    pub rec: Option<Var>,
    pub cyc: Option<Var>,
    pub mar: Option<Var>,
    pub ort: Option<Var>,
    pub dec: Option<Var>,
    pub homo_gd: Option<Var>,
    pub hetero_gd: Option<Var>,
    pub total: Var,
}

/// Numeric values of the loss terms; disabled terms are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub task: f64,
    pub rec: f64,
    pub cyc: f64,
    pub mar: f64,
    pub ort: f64,
    pub dec: f64,
    pub homo_gd: f64,
    pub hetero_gd: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.task,
            self.rec,
            self.cyc,
            self.mar,
            self.ort,
            self.dec,
            self.homo_gd,
            self.hetero_gd,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Total objective recomputed from the logged components.
    pub fn recombined(&self, w: &LossWeights) -> f64 {
        crate::fusion::combine_total(self.task, self.dec, self.homo_gd, self.hetero_gd, w.lambda1, w.lambda2)
    }
}

/// Loss component names accepted by [`LossVars::get`].
pub const COMPONENTS: [&str; 8] = ["task", "rec", "cyc", "mar", "ort", "homo_gd", "hetero_gd", "total"];

impl LossVars {
    pub fn get(&self, component: &str) -> Option<Var> {
        match component {
            "task" => Some(self.task),
            "rec" => self.rec,
            "cyc" => self.cyc,
            "mar" => self.mar,
            "ort" => self.ort,
            "dec" => self.dec,
            "homo_gd" => self.homo_gd,
            "hetero_gd" => self.hetero_gd,
            "total" => Some(self.total),
            _ => None,
        }
    }

    pub fn report(&self, tape: &Tape) -> LossReport {
        let v = |x: Option<Var>| x.map_or(0.0, |x| tape.item(x));
        LossReport {
            task: tape.item(self.task),
            rec: v(self.rec),
            cyc: v(self.cyc),
            mar: v(self.mar),
            ort: v(self.ort),
            dec: v(self.dec),
            homo_gd: v(self.homo_gd),
            hetero_gd: v(self.hetero_gd),
            total: tape.item(self.total),
        }
    }
}

/// Per-sample pooled features kept for probing.
#[derive(Debug, Clone, Copy)]
pub struct SampleVars {
    pub pred: Var,
    /// Pooled homogeneous features (`d`); pooled `x̃` when decoupling is off.
    pub homo: [Var; 3],
    /// Pooled private features (`d`), when decoupling is on.
    pub hetero: Option<[Var; 3]>,
    /// Pooled reinforced features (`2d`), when decoupling is on.
    pub reinforced: Option<[Var; 3]>,
    pub homo_graph: Option<Var>,
}

pub struct Forward {
    pub losses: LossVars,
    pub samples: Vec<SampleVars>,
    pub homo_graphs: Vec<DistillGraph>,
    pub hetero_graphs: Vec<DistillGraph>,
}

/// Plain-number features for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub pred: f64,
    pub homo: [Vec<f64>; 3],
    pub hetero: Option<[Vec<f64>; 3]>,
    pub reinforced: Option<[Vec<f64>; 3]>,
}

impl Forward {
    pub fn predictions(&self, tape: &Tape) -> Vec<f64> {
        self.samples.iter().map(|s| tape.item(s.pred)).collect()
    }

    pub fn features(&self, tape: &Tape) -> Vec<SampleFeatures> {
        let read = |v: [Var; 3]| v.map(|x| tape.value(x).data().to_vec());
        self.samples
            .iter()
            .map(|s| SampleFeatures {
                pred: tape.item(s.pred),
                homo: read(s.homo),
                hetero: s.hetero.map(read),
                reinforced: s.reinforced.map(read),
            })
            .collect()
    }
}

fn mean_of(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let sum = tape.add_all(terms)?;
    Ok(tape.scale(sum, 1.0 / terms.len() as f64))
}

/// Runs the full model on `batch` and builds every enabled loss term.
pub fn forward(
    tape: &mut Tape,
    p: &mut Bound,
    cfg: &ModelConfig,
    weights: &LossWeights,
    batch: &Batch,
) -> Result<Forward> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(DmdError::Data("empty batch".into()));
    }
    let t = cfg.toggles;
    let mut samples = Vec::with_capacity(batch.len());
    let mut recs = Vec::new();
    let mut cycs = Vec::new();
    let mut orts = Vec::new();
    let mut homo_losses = Vec::new();
    let mut hetero_losses = Vec::new();
    let mut homo_graphs = Vec::new();
    let mut hetero_graphs = Vec::new();
    let mut margin_vectors = Vec::new();
    let mut margin_mods = Vec::new();

    for (b, inputs) in batch.inputs.iter().enumerate() {
        let lens = batch.lens[b];
        let mut x_tilde = Vec::with_capacity(3);
        for m in Modality::ALL {
            let raw = tape.constant(inputs[m.index()].clone());
            x_tilde.push(shallow_encode(tape, p, cfg, m, raw)?);
        }

        let (homo, hetero_seq, hetero_pooled) = if t.fd {
            let mut homo = Vec::with_capacity(3);
            let mut hseq = Vec::with_capacity(3);
            let mut hpool = Vec::with_capacity(3);
            let mut rec_terms = Vec::with_capacity(3);
            let mut cyc_terms = Vec::with_capacity(3);
            let mut ort_pairs = Vec::with_capacity(3);
            for m in Modality::ALL {
                let i = m.index();
                let pair = decouple(tape, p, x_tilde[i], m, lens[i])?;
                let synth = synthesize(tape, p, &pair, m)?;
                rec_terms.push(loss_rec(tape, x_tilde[i], synth, lens[i])?);
                cyc_terms.push(loss_cyc(tape, p, &pair, synth, m, lens[i])?);
                ort_pairs.push((pair.homo_pooled, pair.hetero_pooled));
                homo.push(pair.homo_pooled);
                hseq.push(pair.hetero);
                hpool.push(pair.hetero_pooled);
            }
            recs.push(tape.add_all(&rec_terms)?);
            cycs.push(tape.add_all(&cyc_terms)?);
            orts.push(loss_ort(tape, &ort_pairs)?);
            let arr = |v: Vec<Var>| -> [Var; 3] { v.try_into().expect("three modalities") };
            (arr(homo), Some(arr(hseq)), Some(arr(hpool)))
        } else {
            let mut homo = Vec::with_capacity(3);
            for m in Modality::ALL {
                homo.push(tape.mean_pool_rows(x_tilde[m.index()], lens[m.index()])?);
            }
            (homo.try_into().expect("three modalities"), None, None)
        };
        for m in Modality::ALL {
            margin_vectors.push(homo[m.index()]);
            margin_mods.push(m);
        }

        // Reinforced features only matter when they reach fusion (HeteroGD on).
        let reinforced = match (hetero_seq, t.hetero_gd) {
            (Some(hs), true) => Some(reinforce_all(tape, p, cfg, &hs, lens)?.pooled),
            _ => None,
        };

        let mut homo_graph = None;
        if t.homo_gd {
            let unit = homo_gd(tape, p, cfg, &homo)?;
            homo_losses.push(unit.loss);
            homo_graph = Some(unit.loss);
            homo_graphs.push(unit.graph(tape));
        }
        if let (true, Some(z)) = (t.hetero_gd, reinforced.as_ref()) {
            let unit = hetero_gd(tape, p, cfg, z)?;
            hetero_losses.push(unit.loss);
            hetero_graphs.push(unit.graph(tape));
        }

        let fused = fuse(tape, p, cfg, &homo, reinforced.as_ref())?;
        let pred = head(tape, p, fused.vector)?;
        samples.push(SampleVars {
            pred,
            homo,
            hetero: hetero_pooled,
            reinforced,
            homo_graph,
        });
    }

    let preds: Vec<Var> = samples.iter().map(|s| s.pred).collect();
    let task = task_loss(tape, &preds, &batch.labels)?;

    let (rec, cyc, mar, ort, dec) = if t.fd {
        let rec = mean_of(tape, &recs)?;
        let cyc = mean_of(tape, &cycs)?;
        let ort = mean_of(tape, &orts)?;
        let classes: Vec<i32> = margin_classes(&batch.labels).into_iter().flat_map(|c| [c; 3]).collect();
        let mar = loss_margin(tape, &margin_vectors, &margin_mods, &classes, weights.alpha)?;
        let dec = loss_dec(tape, rec, cyc, mar, ort, weights.gamma)?;
        (Some(rec), Some(cyc), Some(mar), Some(ort), Some(dec))
    } else {
        (None, None, None, None, None)
    };
    let homo_gd = if homo_losses.is_empty() {
        None
    } else {
        Some(mean_of(tape, &homo_losses)?)
    };
    let hetero_gd = if hetero_losses.is_empty() {
        None
    } else {
        Some(mean_of(tape, &hetero_losses)?)
    };
    let total = total_loss(tape, task, dec, homo_gd, hetero_gd, weights)?;
    Ok(Forward {
        losses: LossVars {
            task,
            rec,
            cyc,
            mar,
            ort,
            dec,
            homo_gd,
            hetero_gd,
            total,
        },
        samples,
        homo_graphs,
        hetero_graphs,
    })
}

/// Forward pass without keeping gradients: predictions, losses and features.
pub fn infer(
    store: &crate::params::ParamStore,
    cfg: &ModelConfig,
    weights: &LossWeights,
    batch: &Batch,
) -> Result<(LossReport, Vec<SampleFeatures>)> {
    let mut tape = Tape::new();
    let mut p = Bound::new(store);
    let fwd = forward(&mut tape, &mut p, cfg, weights, batch)?;
    Ok((fwd.losses.report(&tape), fwd.features(&tape)))
}

/// Pads nothing and checks nothing: wraps raw per-modality tensors as a
/// single-sample batch (handy for examples and tests).
pub fn single_batch(id: &str, seqs: [Tensor; 3], label: f64) -> Result<Batch> {
    let s = crate::data::Sample {
        id: id.into(),
        seqs,
        label,
        latent: None,
    };
    Batch::from_samples(&[&s], crate::config::AlignMode::Unaligned)
}
