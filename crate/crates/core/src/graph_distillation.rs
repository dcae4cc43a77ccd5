//! Graph distillation unit: one node per modality, learned directed edge
//! weights, and logit discrepancies weighted along those edges.
//!
//! The unit is instantiated twice with disjoint parameters: over pooled
//! homogeneous features (`homo_gd`) and over pooled reinforced heterogeneous
//! features (`hetero_gd`).

use serde::{Deserialize, Serialize};

use crate::config::{Discrepancy, ModelConfig};
use crate::error::Result;
use crate::modality::Modality;
use crate::params::Bound;
use crate::tensor::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Homo,
    Hetero,
}

impl Space {
    pub fn prefix(self) -> &'static str {
        match self {
            Space::Homo => "homo_gd",
            Space::Hetero => "hetero_gd",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Space::Homo => "homo",
            Space::Hetero => "hetero",
        }
    }
}

/// 3×3 matrix of tape values indexed `[source][target]`; the diagonal is empty.
pub type EdgeVars = [[Option<Var>; 3]; 3];

/// Tape handles produced by one unit evaluation.
#[derive(Debug, Clone)]
pub struct UnitOutput {
    pub loss: Var,
    pub weights: EdgeVars,
    pub discrepancies: EdgeVars,
    pub logits: [Var; 3],
}

/// Numeric snapshot of a unit: edge weights `w[i][j]` (source `i`, target
/// `j`), discrepancies `e[i][j]`, and per-modality logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillGraph {
    pub w: [[f64; 3]; 3],
    pub e: [[f64; 3]; 3],
    pub logits: [f64; 3],
}

impl DistillGraph {
    pub fn zeros() -> Self {
        Self {
            w: [[0.0; 3]; 3],
            e: [[0.0; 3]; 3],
            logits: [0.0; 3],
        }
    }

    /// Weighted distillation into target `j` over its incoming edges.
    pub fn per_target(&self, j: usize) -> f64 {
        (0..3).filter(|&i| i != j).map(|i| self.w[i][j] * self.e[i][j]).sum()
    }

    /// Element-wise L1 norm of `W ⊙ E`.
    pub fn l1(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += (self.w[i][j] * self.e[i][j]).abs();
            }
        }
        s
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..3).map(|i| self.w[i][j]).sum()
    }

    /// Element-wise mean of several graphs.
    pub fn mean(graphs: &[DistillGraph]) -> DistillGraph {
        let mut out = DistillGraph::zeros();
        if graphs.is_empty() {
            return out;
        }
        let n = graphs.len() as f64;
        for g in graphs {
            for i in 0..3 {
                out.logits[i] += g.logits[i] / n;
                for j in 0..3 {
                    out.w[i][j] += g.w[i][j] / n;
                    out.e[i][j] += g.e[i][j] / n;
                }
            }
        }
        out
    }
}

impl UnitOutput {
    pub fn graph(&self, tape: &Tape) -> DistillGraph {
        let read = |m: &EdgeVars| {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    if let Some(v) = m[i][j] {
                        out[i][j] = tape.item(v);
                    }
                }
            }
            out
        };
        DistillGraph {
            w: read(&self.weights),
            e: read(&self.discrepancies),
            logits: self.logits.map(|l| tape.item(l)),
        }
    }
}

/// Scalar regression logit `f(x)` for one pooled feature vector.
pub fn modality_logit(tape: &mut Tape, p: &mut Bound, space: Space, feat: Var) -> Result<Var> {
    p.dense(tape, &format!("{}.f", space.prefix()), "", feat)
}

/// Raw scores `g([[f(x_i), x_i], [f(x_j), x_j]])` for every ordered pair `i ≠ j`.
pub fn edge_scores(
    tape: &mut Tape,
    p: &mut Bound,
    space: Space,
    feats: &[Var; 3],
    logits: &[Var; 3],
) -> Result<EdgeVars> {
    let mut out: EdgeVars = [[None; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let joined = tape.concat(&[logits[i], feats[i], logits[j], feats[j]])?;
            out[i][j] = Some(p.dense(tape, &format!("{}.g", space.prefix()), "", joined)?);
        }
    }
    Ok(out)
}

/// Softmax of raw scores over each target's incoming edges.
pub fn normalize_incoming(tape: &mut Tape, scores: &EdgeVars) -> Result<EdgeVars> {
    let mut out: EdgeVars = [[None; 3]; 3];
    for target in Modality::ALL {
        let j = target.index();
        let sources = target.others().map(Modality::index);
        let raw: Vec<Var> = sources
            .iter()
            .map(|&i| scores[i][j].expect("off-diagonal score"))
            .collect();
        let joined = tape.concat(&raw)?;
        let probs = tape.softmax(joined, 0)?;
        for (slot, &i) in sources.iter().enumerate() {
            out[i][j] = Some(tape.element(probs, slot)?);
        }
    }
    Ok(out)
}

pub fn edge_weights(
    tape: &mut Tape,
    p: &mut Bound,
    space: Space,
    feats: &[Var; 3],
    logits: &[Var; 3],
) -> Result<EdgeVars> {
    let scores = edge_scores(tape, p, space, feats, logits)?;
    normalize_incoming(tape, &scores)
}

/// `ε = (src − tgt)²` (or `|src − tgt|`). With `detach_source` the source
/// logit acts as a fixed teacher and receives no gradient.
pub fn discrepancy(tape: &mut Tape, src: Var, tgt: Var, kind: Discrepancy, detach_source: bool) -> Result<Var> {
    let teacher = if detach_source { tape.stop_gradient(src) } else { src };
    let diff = tape.sub(teacher, tgt)?;
    Ok(match kind {
        Discrepancy::Squared => tape.square(diff),
        Discrepancy::Absolute => tape.abs(diff),
    })
}

/// `Σ_ij W_ij · E_ij` over the off-diagonal entries.
pub fn gd_loss(tape: &mut Tape, weights: &EdgeVars, discrepancies: &EdgeVars) -> Result<Var> {
    let mut terms = Vec::with_capacity(6);
    for i in 0..3 {
        for j in 0..3 {
            if let (Some(w), Some(e)) = (weights[i][j], discrepancies[i][j]) {
                terms.push(tape.mul(w, e)?);
            }
        }
    }
    tape.add_all(&terms)
}

/// Full unit over three pooled feature vectors (one per modality, L, V, A).
pub fn run_unit(
    tape: &mut Tape,
    p: &mut Bound,
    cfg: &ModelConfig,
    space: Space,
    feats: &[Var; 3],
) -> Result<UnitOutput> {
    let logits = [
        modality_logit(tape, p, space, feats[0])?,
        modality_logit(tape, p, space, feats[1])?,
        modality_logit(tape, p, space, feats[2])?,
    ];
    let weights = edge_weights(tape, p, space, feats, &logits)?;
    let mut discrepancies: EdgeVars = [[None; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                discrepancies[i][j] = Some(discrepancy(
                    tape,
                    logits[i],
                    logits[j],
                    cfg.discrepancy,
                    cfg.detach_teacher,
                )?);
            }
        }
    }
    let loss = gd_loss(tape, &weights, &discrepancies)?;
    Ok(UnitOutput {
        loss,
        weights,
        discrepancies,
        logits,
    })
}

/// Distillation over pooled homogeneous features (`d` each).
pub fn homo_gd(tape: &mut Tape, p: &mut Bound, cfg: &ModelConfig, homo_pooled: &[Var; 3]) -> Result<UnitOutput> {
    run_unit(tape, p, cfg, Space::Homo, homo_pooled)
}

/// Distillation over pooled reinforced heterogeneous features (`2d` each).
pub fn hetero_gd(
    tape: &mut Tape,
    p: &mut Bound,
    cfg: &ModelConfig,
    reinforced_pooled: &[Var; 3],
) -> Result<UnitOutput> {
    run_unit(tape, p, cfg, Space::Hetero, reinforced_pooled)
}
