//! Directed multi-head crossmodal attention. Each target modality queries the
//! two others; the two enhanced streams are concatenated to `2d`.

use crate::config::ModelConfig;
use crate::error::{DmdError, Result};
use crate::modality::Modality;
use crate::params::Bound;
use crate::tensor::{Tape, Tensor, Var};

/// Output of one directed attention unit.
#[derive(Debug, Clone)]
pub struct Attended {
    /// `T_t × d`.
    pub output: Var,
    /// One `T_t × T_s` attention matrix per head (last layer).
    pub attention: Vec<Var>,
}

/// Reinforced heterogeneous features for all three targets.
#[derive(Debug, Clone)]
pub struct Reinforced {
    /// `T_m × 2d` per modality.
    pub z: [Var; 3],
    /// Temporal means over valid rows, `2d` each.
    pub pooled: [Var; 3],
}

/// Sinusoidal position table, `rows × d`.
pub fn sinusoidal_positions(rows: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * d);
    for t in 0..rows {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = t as f64 * freq;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(rows, d, data).expect("position table")
}

fn with_positions(tape: &mut Tape, x: Var) -> Result<Var> {
    let (rows, d) = (tape.value(x).rows(), tape.value(x).cols());
    let pos = tape.constant(sinusoidal_positions(rows, d));
    tape.add(x, pos)
}

/// Attention from `src` (first `src_len` rows valid) into `tgt`. Layers are
/// stacked by feeding each layer's output back in as the next target.
#[allow(clippy::too_many_arguments)]
pub fn crossmodal_attend(
    tape: &mut Tape,
    p: &mut Bound,
    cfg: &ModelConfig,
    src_modality: Modality,
    tgt_modality: Modality,
    src: Var,
    src_len: usize,
    tgt: Var,
) -> Result<Attended> {
    if src_len == 0 {
        return Err(DmdError::shape("crossmodal_attend", "source sequence is empty"));
    }
    let d = cfg.d;
    for (what, v) in [("source", src), ("target", tgt)] {
        let t = tape.value(v);
        if t.rank() != 2 || t.cols() != d {
            return Err(DmdError::shape(
                "crossmodal_attend",
                format!("{what} shape {:?}, expected [T, {d}]", t.shape()),
            ));
        }
    }
    if src_len > tape.value(src).rows() {
        return Err(DmdError::shape(
            "crossmodal_attend",
            format!("{src_len} valid rows of {}", tape.value(src).rows()),
        ));
    }
    let heads = cfg.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (src, mut state) = if cfg.positional {
        (with_positions(tape, src)?, with_positions(tape, tgt)?)
    } else {
        (src, tgt)
    };
    let mut attention = Vec::new();
    for layer in 0..cfg.ca_layers {
        let prefix = format!("ca.{layer}.{src_modality}_to_{tgt_modality}");
        let wq = p.get(tape, &format!("{prefix}.q"))?;
        let wk = p.get(tape, &format!("{prefix}.k"))?;
        let wv = p.get(tape, &format!("{prefix}.v"))?;
        let wo = p.get(tape, &format!("{prefix}.o"))?;
        let q = tape.matmul(state, wq)?;
        let k = tape.matmul(src, wk)?;
        let v = tape.matmul(src, wv)?;
        attention.clear();
        let mut head_out = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.masked_softmax_rows(scores, src_len)?;
            head_out.push(tape.matmul(attn, vh)?);
            attention.push(attn);
        }
        let joined = tape.concat(&head_out)?;
        state = tape.matmul(joined, wo)?;
    }
    Ok(Attended {
        output: state,
        attention,
    })
}

/// Builds `Z_{→m}` for every target from the private sequences `hetero`
/// (valid lengths `lens`). With CA disabled each target is duplicated.
pub fn reinforce_all(
    tape: &mut Tape,
    p: &mut Bound,
    cfg: &ModelConfig,
    hetero: &[Var; 3],
    lens: [usize; 3],
) -> Result<Reinforced> {
    let mut z = Vec::with_capacity(3);
    let mut pooled = Vec::with_capacity(3);
    for tgt in Modality::ALL {
        let j = tgt.index();
        let zm = if cfg.toggles.ca {
            let mut streams = Vec::with_capacity(2);
            for src in tgt.others() {
                let i = src.index();
                let a = crossmodal_attend(tape, p, cfg, src, tgt, hetero[i], lens[i], hetero[j])?;
                streams.push(a.output);
            }
            tape.concat(&streams)?
        } else {
            tape.concat(&[hetero[j], hetero[j]])?
        };
        pooled.push(tape.mean_pool_rows(zm, lens[j])?);
        z.push(zm);
    }
    Ok(Reinforced {
        z: z.try_into().expect("three targets"),
        pooled: pooled.try_into().expect("three targets"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::testutil::{max_param_grad_error, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ModelConfig {
        ModelConfig {
            d: 8,
            raw_dims: [3, 3, 3],
            heads: 4,
            ..ModelConfig::default()
        }
    }

    fn attend(store: &ParamStore, c: &ModelConfig, src: &Tensor, src_len: usize, tgt: &Tensor) -> (Tensor, Vec<Tensor>) {
        let mut tape = Tape::new();
        let mut p = Bound::new(store);
        let s = tape.constant(src.clone());
        let t = tape.constant(tgt.clone());
        let a = crossmodal_attend(&mut tape, &mut p, c, Modality::L, Modality::V, s, src_len, t).unwrap();
        (
            tape.value(a.output).clone(),
            a.attention.iter().map(|&v| tape.value(v).clone()).collect(),
        )
    }

    #[test]
    fn singleton_source_attends_fully() {
        let store = ParamStore::init(&cfg(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let src = random_tensor(&mut rng, &[1, 8]);
        let tgt = random_tensor(&mut rng, &[3, 8]);
        let (out, attn) = attend(&store, &cfg(), &src, 1, &tgt);
        for a in &attn {
            assert!(a.data().iter().all(|&w| w == 1.0));
        }
        // every output row equals the projected single source row
        let v = src.matmul(store.get("ca.0.L_to_V.v").unwrap()).unwrap();
        let expected = v.matmul(store.get("ca.0.L_to_V.o").unwrap()).unwrap();
        for r in 0..3 {
            for c in 0..8 {
                assert!((out.at(r, c) - expected.at(0, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unaligned_lengths_and_row_sums() {
        let store = ParamStore::init(&cfg(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = random_tensor(&mut rng, &[9, 8]);
        let tgt = random_tensor(&mut rng, &[4, 8]);
        let (out, attn) = attend(&store, &cfg(), &src, 9, &tgt);
        assert_eq!(out.shape(), &[4, 8]);
        assert_eq!(attn.len(), 4);
        for a in &attn {
            assert_eq!(a.shape(), &[4, 9]);
            for r in 0..4 {
                let s: f64 = a.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
                assert!(a.row(r).iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn padded_source_rows_are_ignored() {
        let store = ParamStore::init(&cfg(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = random_tensor(&mut rng, &[5, 8]);
        let tgt = random_tensor(&mut rng, &[3, 8]);
        let mut padded = src.data().to_vec();
        padded.extend(random_tensor(&mut rng, &[2, 8]).data());
        let padded = Tensor::matrix(7, 8, padded).unwrap();
        let (a, _) = attend(&store, &cfg(), &src, 5, &tgt);
        let (b, _) = attend(&store, &cfg(), &padded, 5, &tgt);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn source_permutation_leaves_output_unchanged() {
        let store = ParamStore::init(&cfg(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_tensor(&mut rng, &[6, 8]);
        let tgt = random_tensor(&mut rng, &[4, 8]);
        let perm = [3, 0, 5, 1, 4, 2];
        let rows: Vec<Vec<f64>> = perm.iter().map(|&r| src.row(r).to_vec()).collect();
        let shuffled = Tensor::from_rows(&rows).unwrap();
        let (a, attn_a) = attend(&store, &cfg(), &src, 6, &tgt);
        let (b, attn_b) = attend(&store, &cfg(), &shuffled, 6, &tgt);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (new_c, &old_c) in perm.iter().enumerate() {
            assert!((attn_b[0].at(1, new_c) - attn_a[0].at(1, old_c)).abs() < 1e-12);
        }
    }

    #[test]
    fn errors_on_empty_or_mismatched_input() {
        let store = ParamStore::init(&cfg(), 0);
        let mut tape = Tape::new();
        let mut p = Bound::new(&store);
        let s = tape.constant(Tensor::zeros(&[3, 8]));
        let t = tape.constant(Tensor::zeros(&[2, 8]));
        let bad = tape.constant(Tensor::zeros(&[2, 6]));
        let c = cfg();
        assert!(crossmodal_attend(&mut tape, &mut p, &c, Modality::L, Modality::V, s, 0, t).is_err());
        assert!(crossmodal_attend(&mut tape, &mut p, &c, Modality::L, Modality::V, s, 3, bad).is_err());
    }

    #[test]
    fn reinforce_shapes_and_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seqs = [6, 4, 9].map(|t| random_tensor(&mut rng, &[t, 8]));
        for ca in [true, false] {
            let mut c = cfg();
            c.toggles.ca = ca;
            let store = ParamStore::init(&c, 4);
            let mut tape = Tape::new();
            let mut p = Bound::new(&store);
            let h = [0, 1, 2].map(|i| tape.constant(seqs[i].clone()));
            let r = reinforce_all(&mut tape, &mut p, &c, &h, [6, 4, 9]).unwrap();
            for (i, t) in [6, 4, 9].into_iter().enumerate() {
                assert_eq!(tape.shape(r.z[i]), &[t, 16]);
                assert_eq!(tape.shape(r.pooled[i]), &[16]);
            }
            if !ca {
                let z = tape.value(r.z[1]);
                for row in 0..4 {
                    assert_eq!(&z.row(row)[..8], seqs[1].row(row));
                    assert_eq!(&z.row(row)[8..], seqs[1].row(row));
                }
            }
        }
    }

    #[test]
    fn reinforce_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seqs = [3, 5, 2].map(|t| random_tensor(&mut rng, &[t, 8]));
        let run = || {
            let store = ParamStore::init(&cfg(), 5);
            let mut tape = Tape::new();
            let mut p = Bound::new(&store);
            let h = [0, 1, 2].map(|i| tape.constant(seqs[i].clone()));
            let r = reinforce_all(&mut tape, &mut p, &cfg(), &h, [3, 5, 2]).unwrap();
            r.z.map(|v| tape.value(v).clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let seqs = [4, 3, 5].map(|t| random_tensor(&mut rng, &[t, 8]));
        for positional in [false, true] {
            let c = ModelConfig {
                positional,
                ca_layers: if positional { 2 } else { 1 },
                ..cfg()
            };
            let store = ParamStore::init(&c, 6);
            let err = max_param_grad_error(&store, |tape, p| {
                let h = [0, 1, 2].map(|i| tape.constant(seqs[i].clone()));
                let r = reinforce_all(tape, p, &c, &h, [4, 2, 5])?;
                let parts: Vec<Var> = r.pooled.iter().map(|&v| tape.square(v)).collect();
                let all = tape.concat(&parts)?;
                Ok(tape.sum(all))
            });
            assert!(err < 1e-5, "positional={positional}: {err}");
        }
    }
}
