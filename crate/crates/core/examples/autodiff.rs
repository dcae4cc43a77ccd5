//! Builds a tiny expression on the tape, back-propagates, and compares the
//! result with a central finite difference.

use dmd::{Tape, Tensor};

fn loss(w: &Tensor, x: &Tensor) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let wv = tape.param(w.clone());
    let xv = tape.constant(x.clone());
    let h = tape.matmul(xv, wv).unwrap();
    let h = tape.tanh(h);
    let l = tape.sq_frobenius(h);
    let g = tape.backward(l).unwrap();
    (tape.item(l), g.get(wv).unwrap().data().to_vec())
}

fn main() {
    let x = Tensor::from_rows(&[vec![0.3, -1.2, 0.5], vec![1.0, 0.2, -0.7]]).unwrap();
    let w = Tensor::from_rows(&[vec![0.1, 0.4], vec![-0.3, 0.2], vec![0.8, -0.5]]).unwrap();
    let (value, grad) = loss(&w, &x);
    println!("loss {value:.6}");

    let h = 1e-5;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = w.clone();
        plus.data_mut()[i] += h;
        let mut minus = w.clone();
        minus.data_mut()[i] -= h;
        let fd = (loss(&plus, &x).0 - loss(&minus, &x).0) / (2.0 * h);
        println!("w[{i}]  analytic {g:+.8}  numeric {fd:+.8}");
    }
}
