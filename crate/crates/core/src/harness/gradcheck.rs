//! Full-model finite-difference gradient check.
//!
//! For every top-level module, `n_probes` random parameter entries are
//! perturbed by `±h`; the central difference of every loss component is
//! compared with that component's back-propagated gradient. Stop-gradient
//! outputs are held at their unperturbed values during differencing, so the
//! check targets exactly the objective the optimizer follows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::TrainConfig;
use crate::data::Batch;
use crate::error::{DmdError, Result};
use crate::graph_distillation::discrepancy;
use crate::model::{forward, LossVars, COMPONENTS};
use crate::params::{module_of, Bound, ParamStore};
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub n_probes: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Finite-difference step.
    pub step: f64,
    /// Lower bound on the relative-error denominator; gradients smaller than
    /// this are effectively compared in absolute terms.
    pub floor: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            n_probes: 20,
            seed: 0,
            tolerance: 1e-4,
            step: 1e-5,
            floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub component: String,
    pub max_rel_err: f64,
    pub worst: Option<Probe>,
    pub probes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub components: Vec<ComponentReport>,
    /// Largest gradient reaching a teacher logit through a discrepancy term.
    pub teacher_path_grad: f64,
    pub failures: Vec<String>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.components.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }
}

fn enabled(losses: &LossVars) -> Vec<&'static str> {
    COMPONENTS.into_iter().filter(|c| losses.get(c).is_some()).collect()
}

/// Values of every enabled component at `store`, with detached values frozen.
fn component_values(
    cfg: &TrainConfig,
    store: &ParamStore,
    batch: &Batch,
    frozen: &[Tensor],
) -> Result<BTreeMap<&'static str, f64>> {
    let mut tape = Tape::with_frozen_detached(frozen.to_vec());
    let mut p = Bound::new(store);
    let fwd = forward(&mut tape, &mut p, &cfg.model, &cfg.weights, batch)?;
    Ok(enabled(&fwd.losses)
        .into_iter()
        .map(|c| (c, tape.item(fwd.losses.get(c).expect("enabled"))))
        .collect())
}

/// Gradient reaching the source logit of a discrepancy term, for logits
/// taken from the current graphs.
fn teacher_path(cfg: &TrainConfig, pairs: &[(f64, f64)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(src, tgt) in pairs {
        let mut tape = Tape::new();
        let s = tape.param(Tensor::scalar(src));
        let t = tape.param(Tensor::scalar(tgt));
        let e = discrepancy(&mut tape, s, t, cfg.model.discrepancy, cfg.model.detach_teacher)?;
        let g = tape.backward(e)?;
        worst = worst.max(g.get(s).map_or(0.0, |g| g.item().abs()));
    }
    Ok(worst)
}

pub fn gradcheck(
    cfg: &TrainConfig,
    store: &ParamStore,
    batch: &Batch,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    if cfg.model.d > 8 {
        return Err(DmdError::Config(format!("gradcheck needs d <= 8, got {}", cfg.model.d)));
    }
    if let Some(t) = batch.lens.iter().flatten().find(|&&t| t > 5) {
        return Err(DmdError::Config(format!("gradcheck needs sequences of length <= 5, got {t}")));
    }

    let mut tape = Tape::new();
    let mut bound = Bound::new(store);
    let fwd = forward(&mut tape, &mut bound, &cfg.model, &cfg.weights, batch)?;
    let components = enabled(&fwd.losses);
    let mut analytic = BTreeMap::new();
    for &c in &components {
        let g = tape.backward(fwd.losses.get(c).expect("enabled"))?;
        analytic.insert(c, bound.gradients(&g));
    }
    let frozen = tape.detached_values().to_vec();

    let mut pairs = Vec::new();
    for g in fwd.homo_graphs.iter().chain(&fwd.hetero_graphs) {
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    pairs.push((g.logits[i], g.logits[j]));
                }
            }
        }
    }
    let teacher_path_grad = teacher_path(cfg, &pairs)?;

    // Probe set: n_probes random entries per module.
    let mut by_module: BTreeMap<&str, Vec<(&String, usize)>> = BTreeMap::new();
    for (name, t) in store.iter() {
        by_module.entry(module_of(name)).or_default().push((name, t.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probes = Vec::new();
    for params in by_module.values() {
        let total: usize = params.iter().map(|(_, n)| n).sum();
        for _ in 0..opts.n_probes {
            let mut k = rng.random_range(0..total);
            for &(name, n) in params {
                if k < n {
                    probes.push((name.clone(), k));
                    break;
                }
                k -= n;
            }
        }
    }

    let mut reports: BTreeMap<&str, ComponentReport> = components
        .iter()
        .map(|&c| {
            (
                c,
                ComponentReport {
                    component: c.to_string(),
                    max_rel_err: 0.0,
                    worst: None,
                    probes: 0,
                },
            )
        })
        .collect();
    let mut failures = Vec::new();
    let h = opts.step;
    for (name, index) in probes {
        let mut plus = store.clone();
        plus.get_mut(&name).expect("probe").data_mut()[index] += h;
        let mut minus = store.clone();
        minus.get_mut(&name).expect("probe").data_mut()[index] -= h;
        let vp = component_values(cfg, &plus, batch, &frozen)?;
        let vm = component_values(cfg, &minus, batch, &frozen)?;
        for &c in &components {
            let numeric = (vp[c] - vm[c]) / (2.0 * h);
            let a = analytic[c][&name].data()[index];
            let rel_err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            let r = reports.get_mut(c).expect("component");
            r.probes += 1;
            if rel_err > opts.tolerance {
                failures.push(format!(
                    "{c}: {name}[{index}] analytic {a:e} numeric {numeric:e} rel err {rel_err:e}"
                ));
            }
            if r.worst.is_none() || rel_err > r.max_rel_err {
                r.max_rel_err = rel_err;
                r.worst = Some(Probe {
                    param: name.clone(),
                    index,
                    analytic: a,
                    numeric,
                    rel_err,
                });
            }
        }
    }
    if teacher_path_grad != 0.0 {
        failures.push(format!(
            "teacher path carries gradient {teacher_path_grad:e}; the source logit is not detached"
        ));
    }
    Ok(GradcheckReport {
        components: reports.into_values().collect(),
        teacher_path_grad,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AlignMode, LossWeights, ModelConfig};
    use crate::data::{generate, make_batches, SynthConfig};

    fn setup() -> (TrainConfig, ParamStore, Batch) {
        let cfg = TrainConfig {
            model: ModelConfig {
                d: 4,
                raw_dims: SynthConfig::small().raw_dims,
                heads: 2,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        };
        let samples = generate(3, 5, &SynthConfig::small()).unwrap();
        let batch = make_batches(&samples, &[0, 1, 2], 3, AlignMode::Unaligned).unwrap().remove(0);
        let store = ParamStore::init(&cfg.model, 5).jittered(5, 0.1);
        (cfg, store, batch)
    }

    #[test]
    fn default_model_passes() {
        let (cfg, store, batch) = setup();
        let opts = GradcheckOptions { n_probes: 5, ..Default::default() };
        let report = gradcheck(&cfg, &store, &batch, &opts).unwrap();
        assert!(report.passed(), "{:?}", report.failures);
        assert_eq!(report.teacher_path_grad, 0.0);
        assert_eq!(report.components.len(), COMPONENTS.len());
        assert!(report.components.iter().all(|c| c.probes > 0));
    }

    #[test]
    fn undetached_teacher_is_flagged() {
        let (mut cfg, store, batch) = setup();
        cfg.model.detach_teacher = false;
        let opts = GradcheckOptions { n_probes: 1, ..Default::default() };
        let report = gradcheck(&cfg, &store, &batch, &opts).unwrap();
        assert!(report.teacher_path_grad > 0.0);
        assert!(report.failures.iter().any(|f| f.contains("teacher path")));
    }

    #[test]
    fn zero_lambda2_leaves_distillation_parameters_untouched() {
        let (cfg, store, batch) = setup();
        let weights = LossWeights { lambda2: 0.0, ..cfg.weights };
        let mut tape = Tape::new();
        let mut p = Bound::new(&store);
        let fwd = forward(&mut tape, &mut p, &cfg.model, &weights, &batch).unwrap();
        let grads = p.gradients(&tape.backward(fwd.losses.total).unwrap());
        let mut seen = 0;
        for (name, g) in &grads {
            if module_of(name) == "homo_gd" || module_of(name) == "hetero_gd" {
                assert!(g.data().iter().all(|&v| v == 0.0), "{name}");
                seen += 1;
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn rejects_large_dims() {
        let (mut cfg, _, batch) = setup();
        cfg.model.d = 16;
        let store = ParamStore::init(&cfg.model, 0);
        assert!(matches!(
            gradcheck(&cfg, &store, &batch, &GradcheckOptions::default()),
            Err(DmdError::Config(_))
        ));
    }
}
