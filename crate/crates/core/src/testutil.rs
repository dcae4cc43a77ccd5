//! Finite-difference helpers shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{Bound, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Worst relative error between backprop and central differences over up to
/// eight random entries of every parameter (denominator floored at 1e-4, so
/// near-zero gradients are compared absolutely). Stop-gradient outputs are frozen
/// at their unperturbed values while differencing.
pub fn max_param_grad_error(
    store: &ParamStore,
    f: impl Fn(&mut Tape, &mut Bound) -> Result<Var>,
) -> f64 {
    let h = 1e-5;
    let mut tape = Tape::new();
    let mut bound = Bound::new(store);
    let loss = f(&mut tape, &mut bound).unwrap();
    let grads = bound.gradients(&tape.backward(loss).unwrap());
    let frozen = tape.detached_values().to_vec();
    let eval = |s: &ParamStore| {
        let mut t = Tape::with_frozen_detached(frozen.clone());
        let mut b = Bound::new(s);
        let l = f(&mut t, &mut b).unwrap();
        t.item(l)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for (name, g) in &grads {
        for _ in 0..g.len().min(8) {
            let i = rng.random_range(0..g.len());
            let mut plus = store.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += h;
            let mut minus = store.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let analytic = g.data()[i];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            if err > 1e-5 && std::env::var("GRAD_DEBUG").is_ok() {
                eprintln!("{name}[{i}]: analytic {analytic:e} numeric {numeric:e}");
            }
            worst = worst.max(err);
        }
    }
    worst
}
