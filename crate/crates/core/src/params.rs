//! Named parameter storage and per-tape binding.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{DmdError, Result};
use crate::modality::Modality;
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// Ordered map from parameter path (e.g. `enc_prt.V.w1`) to value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

enum Init {
    /// Glorot-uniform with the given fan-in and fan-out.
    Glorot(usize, usize),
    Zeros,
}

fn specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d;
    let mut out = Vec::new();
    let dense = |out: &mut Vec<_>, prefix: String, suffix: &str, fan_in: usize, fan_out: usize| {
        out.push((format!("{prefix}.w{suffix}"), vec![fan_in, fan_out], Init::Glorot(fan_in, fan_out)));
        out.push((format!("{prefix}.b{suffix}"), vec![fan_out], Init::Zeros));
    };
    for m in Modality::ALL {
        let fan_in = cfg.kernel_width * cfg.raw_dims[m.index()];
        dense(&mut out, format!("shallow.{m}"), "", fan_in, d);
    }
    dense(&mut out, "enc_com".into(), "1", d, d);
    dense(&mut out, "enc_com".into(), "2", d, d);
    for m in Modality::ALL {
        dense(&mut out, format!("enc_prt.{m}"), "1", d, d);
        dense(&mut out, format!("enc_prt.{m}"), "2", d, d);
        dense(&mut out, format!("dec.{m}"), "1", 2 * d, d);
        dense(&mut out, format!("dec.{m}"), "2", d, d);
    }
    for (unit, feat) in [("homo_gd", d), ("hetero_gd", 2 * d)] {
        dense(&mut out, format!("{unit}.f"), "", feat, 1);
        // Zero-initialized edge scorer: every incoming edge starts at 0.5.
        out.push((format!("{unit}.g.w"), vec![2 * (feat + 1), 1], Init::Zeros));
        out.push((format!("{unit}.g.b"), vec![1], Init::Zeros));
    }
    for layer in 0..cfg.ca_layers {
        for tgt in Modality::ALL {
            for src in tgt.others() {
                for proj in ["q", "k", "v", "o"] {
                    out.push((
                        format!("ca.{layer}.{src}_to_{tgt}.{proj}"),
                        vec![d, d],
                        Init::Glorot(d, d),
                    ));
                }
            }
        }
    }
    for m in Modality::ALL {
        dense(&mut out, format!("fusion.homo.{m}"), "", d, 1);
    }
    for m in Modality::ALL {
        dense(&mut out, format!("fusion.hetero.{m}"), "", 2 * d, 1);
    }
    dense(&mut out, "head".into(), "1", cfg.fused_dim(), d);
    dense(&mut out, "head".into(), "2", d, 1);
    out
}

impl ParamStore {
    /// Fresh parameters for `cfg`, deterministic in `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = BTreeMap::new();
        for (name, shape, init) in specs(cfg) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Glorot(fan_in, fan_out) => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
                }
            };
            entries.insert(name, Tensor::new(shape, data).expect("parameter shape"));
        }
        Self { entries }
    }

    /// Copy with uniform noise in `[-scale, scale)` added to every entry.
    /// Moves zero-initialized biases and edge scorers off their special
    /// values, which keeps finite-difference checks away from ReLU kinks.
    pub fn jittered(&self, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for t in out.entries.values_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-scale..scale);
            }
        }
        out
    }

    /// Checks that every expected parameter is present with the right shape.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        for (name, shape, _) in specs(cfg) {
            match self.entries.get(&name) {
                None => return Err(DmdError::Data(format!("checkpoint is missing parameter {name}"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(DmdError::Data(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}

/// Top-level module a parameter path belongs to (`enc_prt.V.w1` → `enc_prt`).
pub fn module_of(name: &str) -> &str {
    name.split('.').next().unwrap_or(name)
}

/// Lazily places parameters on a tape, one leaf per parameter per tape, so
/// that every use of a parameter shares the same gradient slot.
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: BTreeMap<String, Var>,
}

impl<'a> Bound<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            vars: BTreeMap::new(),
        }
    }

    pub fn get(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let t = self
            .store
            .get(name)
            .ok_or_else(|| DmdError::Config(format!("unknown parameter {name}")))?;
        let v = tape.param(t.clone());
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// `x · W + b` using parameters `{prefix}.w{suffix}` / `{prefix}.b{suffix}`.
    pub fn dense(&mut self, tape: &mut Tape, prefix: &str, suffix: &str, x: Var) -> Result<Var> {
        let w = self.get(tape, &format!("{prefix}.w{suffix}"))?;
        let b = self.get(tape, &format!("{prefix}.b{suffix}"))?;
        tape.linear(x, w, b)
    }

    /// Gradient for every stored parameter; zeros where a parameter was not
    /// reached from the loss.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.store
            .iter()
            .map(|(name, t)| {
                let g = self
                    .vars
                    .get(name)
                    .and_then(|v| grads.get(*v))
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = ModelConfig::default();
        let a = ParamStore::init(&cfg, 3);
        let b = ParamStore::init(&cfg, 3);
        assert_eq!(a, b);
        assert_ne!(a, ParamStore::init(&cfg, 4));
        a.check_against(&cfg).unwrap();
        assert_eq!(a.get("shallow.V.w").unwrap().shape(), &[3 * 35, 32]);
        assert_eq!(a.get("dec.A.w1").unwrap().shape(), &[64, 32]);
        assert_eq!(a.get("hetero_gd.g.w").unwrap().shape(), &[2 * 65, 1]);
        assert_eq!(a.get("head.w1").unwrap().shape(), &[288, 32]);
        // six directed attention pairs × four projections per layer
        assert_eq!(a.names().filter(|n| n.starts_with("ca.")).count(), 24);
    }

    #[test]
    fn private_and_shared_sets_are_disjoint() {
        let a = ParamStore::init(&ModelConfig::default(), 0);
        let shared: Vec<_> = a.names().filter(|n| n.starts_with("enc_com.")).collect();
        assert_eq!(shared.len(), 4);
        for m in Modality::ALL {
            let private: Vec<_> = a
                .names()
                .filter(|n| n.starts_with(&format!("enc_prt.{m}.")))
                .collect();
            assert_eq!(private.len(), 4);
        }
    }

    #[test]
    fn bound_shares_one_leaf_per_parameter() {
        let store = ParamStore::init(&ModelConfig::default(), 0);
        let mut tape = Tape::new();
        let mut bound = Bound::new(&store);
        let a = bound.get(&mut tape, "head.b2").unwrap();
        let b = bound.get(&mut tape, "head.b2").unwrap();
        assert_eq!(a, b);
        assert!(bound.get(&mut tape, "nope").is_err());
    }

    #[test]
    fn module_prefix() {
        assert_eq!(module_of("enc_prt.V.w1"), "enc_prt");
        assert_eq!(module_of("head"), "head");
    }
}
