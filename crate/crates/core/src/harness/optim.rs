use std::collections::BTreeMap;

use crate::error::{DmdError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads` must hold a tensor for every parameter.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, param) in store.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| DmdError::Numeric(format!("no gradient for parameter {name}")))?;
            if g.shape() != param.shape() {
                return Err(DmdError::shape(
                    "adam",
                    format!("gradient {:?} for parameter {name} of shape {:?}", g.shape(), param.shape()),
                ));
            }
            let n = param.len();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            for (i, (p, &gi)) in param.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(x: f64) -> ParamStore {
        let mut s = ParamStore::default();
        s.insert("x", Tensor::scalar(x));
        s
    }

    fn grad(g: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("x".to_string(), Tensor::scalar(g))])
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store_with(1.0);
        let mut adam = Adam::new(0.01);
        adam.step(&mut s, &grad(123.0)).unwrap();
        assert!((s.get("x").unwrap().item() - 0.99).abs() < 1e-9);
        assert!(adam.step(&mut s, &BTreeMap::new()).is_err());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = store_with(3.0);
        let mut adam = Adam::new(0.05);
        for _ in 0..2000 {
            let x = s.get("x").unwrap().item();
            adam.step(&mut s, &grad(2.0 * (x - 1.0))).unwrap();
        }
        assert!((s.get("x").unwrap().item() - 1.0).abs() < 1e-3);
    }
}
