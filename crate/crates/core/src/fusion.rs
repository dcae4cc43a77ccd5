//! Gated fusion of the six pooled streams, the regression head, and the
//! task and total objectives.

use serde::{Deserialize, Serialize};

use crate::config::{LossWeights, ModelConfig};
use crate::error::{DmdError, Result};
use crate::modality::Modality;
use crate::params::Bound;
use crate::tensor::{Tape, Tensor, Var};

/// Seven-way sentiment bin: round half away from zero, then clamp to `[-3, 3]`.
pub fn sentiment_class(score: f64) -> i32 {
    // f64::round rounds half away from zero.
    score.round().clamp(-3.0, 3.0) as i32
}

/// Binary polarity: `true` for non-negative scores.
pub fn is_non_negative(score: f64) -> bool {
    score >= 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub class7: i32,
    pub class2: bool,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        Self {
            score,
            class7: sentiment_class(score),
            class2: is_non_negative(score),
        }
    }
}

/// Fused vector and the six stream gates (homo L, V, A then hetero L, V, A).
#[derive(Debug, Clone, Copy)]
pub struct Fused {
    pub vector: Var,
    pub gates: [Var; 6],
}

fn gated(tape: &mut Tape, p: &mut Bound, prefix: &str, stream: Var) -> Result<(Var, Var)> {
    let pre = p.dense(tape, prefix, "", stream)?;
    let gate = tape.sigmoid(pre);
    Ok((tape.scale_by(stream, gate)?, gate))
}

/// Scales each pooled stream by its sigmoid gate and concatenates them into
/// a `9d` vector. `hetero = None` substitutes zero streams.
pub fn fuse(
    tape: &mut Tape,
    p: &mut Bound,
    cfg: &ModelConfig,
    homo: &[Var; 3],
    hetero: Option<&[Var; 3]>,
) -> Result<Fused> {
    let zeros;
    let hetero = match hetero {
        Some(h) => h,
        None => {
            zeros = [0, 1, 2].map(|_| tape.constant(Tensor::zeros(&[2 * cfg.d])));
            &zeros
        }
    };
    let mut parts = Vec::with_capacity(6);
    let mut gates = Vec::with_capacity(6);
    for m in Modality::ALL {
        let (s, g) = gated(tape, p, &format!("fusion.homo.{m}"), homo[m.index()])?;
        parts.push(s);
        gates.push(g);
    }
    for m in Modality::ALL {
        let (s, g) = gated(tape, p, &format!("fusion.hetero.{m}"), hetero[m.index()])?;
        parts.push(s);
        gates.push(g);
    }
    let vector = tape.concat(&parts)?;
    let got = tape.value(vector).len();
    if got != cfg.fused_dim() {
        return Err(DmdError::shape(
            "fuse",
            format!("fused length {got}, expected {}", cfg.fused_dim()),
        ));
    }
    Ok(Fused {
        vector,
        gates: gates.try_into().expect("six gates"),
    })
}

/// Regression head `9d → d → 1` with a ReLU hidden layer.
pub fn head(tape: &mut Tape, p: &mut Bound, fused: Var) -> Result<Var> {
    let h = p.dense(tape, "head", "1", fused)?;
    let h = tape.relu(h);
    p.dense(tape, "head", "2", h)
}

pub fn check_labels(labels: &[f64]) -> Result<()> {
    for (i, &l) in labels.iter().enumerate() {
        if !(-3.0..=3.0).contains(&l) {
            return Err(DmdError::Data(format!("label {l} at position {i} is outside [-3, 3]")));
        }
    }
    Ok(())
}

/// Mean absolute error between single-element predictions and labels.
pub fn task_loss(tape: &mut Tape, preds: &[Var], labels: &[f64]) -> Result<Var> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(DmdError::shape(
            "task_loss",
            format!("{} predictions for {} labels", preds.len(), labels.len()),
        ));
    }
    check_labels(labels)?;
    let pred = tape.concat(preds)?;
    let target = tape.constant(Tensor::vector(labels.to_vec()));
    let diff = tape.sub(pred, target)?;
    let abs = tape.abs(diff);
    Ok(tape.mean(abs))
}

/// `task + λ₁·dec + λ₂·(homo + hetero)`; absent terms count as zero.
pub fn total_loss(
    tape: &mut Tape,
    task: Var,
    dec: Option<Var>,
    dtl_homo: Option<Var>,
    dtl_hetero: Option<Var>,
    w: &LossWeights,
) -> Result<Var> {
    let mut terms = vec![task];
    if let Some(d) = dec {
        terms.push(tape.scale(d, w.lambda1));
    }
    for g in [dtl_homo, dtl_hetero].into_iter().flatten() {
        terms.push(tape.scale(g, w.lambda2));
    }
    tape.add_all(&terms)
}

pub fn combine_total(task: f64, dec: f64, homo: f64, hetero: f64, lambda1: f64, lambda2: f64) -> f64 {
    task + lambda1 * dec + lambda2 * (homo + hetero)
}
