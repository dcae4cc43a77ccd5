//! Shallow temporal encoding, shared/private decoupling, self-regression
//! decoders and the decoupling objective.
//!
//! Every encoder is a position-wise `affine → ReLU → affine` stack applied to
//! each time step; decoders map the concatenated `[homo, hetero]` features
//! (`2d`) back to `d`.

use crate::config::ModelConfig;
use crate::error::{DmdError, Result};
use crate::fusion::sentiment_class;
use crate::modality::Modality;
use crate::params::Bound;
use crate::tensor::{Tape, Var};

/// Homogeneous and heterogeneous parts of one modality's sequence.
#[derive(Debug, Clone, Copy)]
pub struct DecoupledPair {
    /// Shared-encoder output, `T × d`.
    pub homo: Var,
    /// Private-encoder output, `T × d`.
    pub hetero: Var,
    /// Temporal means over the valid rows.
    pub homo_pooled: Var,
    pub hetero_pooled: Var,
}

/// Per-modality temporal convolution to the common dimension `d`.
pub fn shallow_encode(
    tape: &mut Tape,
    p: &mut Bound,
    cfg: &ModelConfig,
    modality: Modality,
    raw: Var,
) -> Result<Var> {
    let expected = cfg.raw_dims[modality.index()];
    let got = tape.value(raw).cols();
    if got != expected {
        return Err(DmdError::Config(format!(
            "modality {modality} expects {expected} raw features, got {got}"
        )));
    }
    let w = p.get(tape, &format!("shallow.{modality}.w"))?;
    let b = p.get(tape, &format!("shallow.{modality}.b"))?;
    tape.conv1d_temporal(raw, w, b, cfg.kernel_width)
}

fn mlp(tape: &mut Tape, p: &mut Bound, prefix: &str, x: Var) -> Result<Var> {
    let h = p.dense(tape, prefix, "1", x)?;
    let h = tape.relu(h);
    p.dense(tape, prefix, "2", h)
}

pub fn encode_shared(tape: &mut Tape, p: &mut Bound, x_tilde: Var) -> Result<Var> {
    mlp(tape, p, "enc_com", x_tilde)
}

pub fn encode_private(tape: &mut Tape, p: &mut Bound, modality: Modality, x: Var) -> Result<Var> {
    mlp(tape, p, &format!("enc_prt.{modality}"), x)
}

/// Splits `x̃` (first `len` rows valid) into shared and private features.
pub fn decouple(
    tape: &mut Tape,
    p: &mut Bound,
    x_tilde: Var,
    modality: Modality,
    len: usize,
) -> Result<DecoupledPair> {
    let homo = encode_shared(tape, p, x_tilde)?;
    let hetero = encode_private(tape, p, modality, x_tilde)?;
    let homo_pooled = tape.mean_pool_rows(homo, len)?;
    let hetero_pooled = tape.mean_pool_rows(hetero, len)?;
    Ok(DecoupledPair {
        homo,
        hetero,
        homo_pooled,
        hetero_pooled,
    })
}

/// Private decoder applied to `[homo, hetero]`: the synthesized coupled feature.
pub fn synthesize(tape: &mut Tape, p: &mut Bound, pair: &DecoupledPair, modality: Modality) -> Result<Var> {
    let joined = tape.concat(&[pair.homo, pair.hetero])?;
    mlp(tape, p, &format!("dec.{modality}"), joined)
}

/// `‖x̃ − synthesized‖²_F` over the valid rows.
pub fn loss_rec(tape: &mut Tape, x_tilde: Var, synthesized: Var, len: usize) -> Result<Var> {
    masked_sq_distance(tape, x_tilde, synthesized, len)
}

/// `‖hetero − E_prt(synthesized)‖²_F` over the valid rows, re-encoding with
/// the same private encoder that produced `hetero`.
pub fn loss_cyc(
    tape: &mut Tape,
    p: &mut Bound,
    pair: &DecoupledPair,
    synthesized: Var,
    modality: Modality,
    len: usize,
) -> Result<Var> {
    let reencoded = encode_private(tape, p, modality, synthesized)?;
    masked_sq_distance(tape, pair.hetero, reencoded, len)
}

/// Squared Frobenius distance restricted to the first `len` rows.
pub fn masked_sq_distance(tape: &mut Tape, a: Var, b: Var, len: usize) -> Result<Var> {
    let diff = tape.sub(a, b)?;
    let diff = tape.mask_rows(diff, len)?;
    Ok(tape.sq_frobenius(diff))
}

/// All `(anchor, positive, negative)` index triplets where the positive shares
/// the anchor's class but not its modality, and the negative shares the
/// anchor's modality but not its class.
pub fn margin_triplets(modalities: &[Modality], classes: &[i32]) -> Vec<[usize; 3]> {
    let n = modalities.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if modalities[j] == modalities[i] || classes[j] != classes[i] {
                continue;
            }
            for k in 0..n {
                if modalities[k] == modalities[i] && classes[k] != classes[i] {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Cosine triplet margin loss over pooled homogeneous vectors.
///
/// Returns a constant 0 (and logs a warning) when the batch holds no valid
/// triplet.
pub fn loss_margin(
    tape: &mut Tape,
    pooled: &[Var],
    modalities: &[Modality],
    classes: &[i32],
    alpha: f64,
) -> Result<Var> {
    if pooled.len() != modalities.len() || pooled.len() != classes.len() {
        return Err(DmdError::shape(
            "loss_margin",
            format!(
                "{} vectors, {} modality tags, {} classes",
                pooled.len(),
                modalities.len(),
                classes.len()
            ),
        ));
    }
    let triplets = margin_triplets(modalities, classes);
    if triplets.is_empty() {
        log::warn!("margin loss: no valid triplet in batch of {}", pooled.len());
        return Ok(tape.constant(crate::tensor::Tensor::scalar(0.0)));
    }
    let stacked = tape.stack_rows(pooled)?;
    let gram = tape.pairwise_cosine(stacked)?;
    tape.triplet_hinge(gram, triplets, alpha)
}

/// Class labels used by the margin loss: 7-class bins of the regression labels.
pub fn margin_classes(labels: &[f64]) -> Vec<i32> {
    labels.iter().map(|&l| sentiment_class(l)).collect()
}

/// `Σ_m cos(homo_pooled_m, hetero_pooled_m)`.
pub fn loss_ort(tape: &mut Tape, pairs: &[(Var, Var)]) -> Result<Var> {
    let cos = pairs
        .iter()
        .map(|&(h, p)| tape.cosine(h, p))
        .collect::<Result<Vec<_>>>()?;
    tape.add_all(&cos)
}

/// `rec + cyc + γ (mar + ort)` on the tape.
pub fn loss_dec(tape: &mut Tape, rec: Var, cyc: Var, mar: Var, ort: Var, gamma: f64) -> Result<Var> {
    let reg = tape.add(mar, ort)?;
    let reg = tape.scale(reg, gamma);
    let base = tape.add(rec, cyc)?;
    tape.add(base, reg)
}

/// Plain-number form of [`loss_dec`].
pub fn combine_dec(rec: f64, cyc: f64, mar: f64, ort: f64, gamma: f64) -> f64 {
    rec + cyc + gamma * (mar + ort)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use crate::tensor::{cosine_plain, Tensor};
    use crate::testutil::{max_param_grad_error, random_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            d: 4,
            raw_dims: [5, 3, 4],
            heads: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn shallow_encode_shape_and_dim_check() {
        let cfg = ModelConfig {
            d: 16,
            heads: 4,
            ..ModelConfig::default()
        };
        let store = ParamStore::init(&cfg, 1);
        let mut tape = Tape::new();
        let mut p = Bound::new(&store);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = tape.constant(random_tensor(&mut rng, &[8, 35]));
        let y = shallow_encode(&mut tape, &mut p, &cfg, Modality::V, raw).unwrap();
        assert_eq!(tape.shape(y), &[8, 16]);
        let err = shallow_encode(&mut tape, &mut p, &cfg, Modality::L, raw).unwrap_err();
        assert!(matches!(err, DmdError::Config(_)));
    }

    #[test]
    fn shallow_encode_width_one_is_linear_map() {
        let cfg = ModelConfig {
            kernel_width: 1,
            ..small_cfg()
        };
        let mut store = ParamStore::init(&cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, &[6, 3]);
        let w = store.get("shallow.V.w").unwrap().clone();
        store.insert("shallow.V.b", Tensor::vector(vec![0.5; 4]));
        let mut tape = Tape::new();
        let mut p = Bound::new(&store);
        let raw = tape.constant(x.clone());
        let y = shallow_encode(&mut tape, &mut p, &cfg, Modality::V, raw).unwrap();
        let expected = x.matmul(&w).unwrap().map(|v| v + 0.5);
        for (a, b) in tape.value(y).data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shared_encoder_is_shared() {
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, &[5, 4]);
        let mut tape = Tape::new();
        let mut p = Bound::new(&store);
        let xv = tape.constant(x);
        let as_l = decouple(&mut tape, &mut p, xv, Modality::L, 5).unwrap();
        let as_v = decouple(&mut tape, &mut p, xv, Modality::V, 5).unwrap();
        assert_eq!(tape.value(as_l.homo), tape.value(as_v.homo));
        assert_ne!(tape.value(as_l.hetero), tape.value(as_v.hetero));
    }

    #[test]
    fn decouple_preserves_shapes() {
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in [1, 7, 50] {
            let mut tape = Tape::new();
            let mut p = Bound::new(&store);
            let xv = tape.constant(random_tensor(&mut rng, &[t, 4]));
            let pair = decouple(&mut tape, &mut p, xv, Modality::A, t).unwrap();
            assert_eq!(tape.shape(pair.homo), &[t, 4]);
            assert_eq!(tape.shape(pair.hetero), &[t, 4]);
            assert_eq!(tape.shape(pair.homo_pooled), &[4]);
        }
    }

    #[test]
    fn pooled_vectors_are_temporal_means() {
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let mut p = Bound::new(&store);
        let xv = tape.constant(random_tensor(&mut rng, &[6, 4]));
        let pair = decouple(&mut tape, &mut p, xv, Modality::L, 4).unwrap();
        let homo = tape.value(pair.homo);
        for c in 0..4 {
            let mean = (0..4).map(|r| homo.at(r, c)).sum::<f64>() / 4.0;
            assert!((tape.value(pair.homo_pooled).data()[c] - mean).abs() < 1e-14);
        }
    }

    #[test]
    fn rec_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let same = tape.constant(tape.value(x).clone());
        let l = loss_rec(&mut tape, x, same, 2).unwrap();
        assert_eq!(tape.item(l), 0.0);

        let zero = tape.constant(Tensor::zeros(&[2, 2]));
        let l = loss_rec(&mut tape, zero, zero, 2).unwrap();
        assert_eq!(tape.item(l), 0.0);

        let off = tape.constant(Tensor::from_rows(&[vec![2.0, 1.0], vec![4.0, 3.0]]).unwrap());
        let l = loss_rec(&mut tape, x, off, 2).unwrap();
        assert_eq!(tape.item(l), 4.0);
        // padded rows are ignored
        let l = loss_rec(&mut tape, x, off, 1).unwrap();
        assert_eq!(tape.item(l), 2.0);
    }

    #[test]
    fn cyc_scalar_toy() {
        let mut tape = Tape::new();
        let hetero = tape.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let re = tape.constant(Tensor::matrix(1, 1, vec![3.0]).unwrap());
        let l = masked_sq_distance(&mut tape, hetero, re, 1).unwrap();
        assert_eq!(tape.item(l), 1.0);
    }

    #[test]
    fn rec_and_cyc_gradients() {
        let cfg = small_cfg();
        let store = ParamStore::init(&cfg, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = random_tensor(&mut rng, &[4, 3]);
        let err = max_param_grad_error(&store, |tape, p| {
            let r = tape.constant(raw.clone());
            let x = shallow_encode(tape, p, &cfg, Modality::V, r)?;
            let pair = decouple(tape, p, x, Modality::V, 3)?;
            let syn = synthesize(tape, p, &pair, Modality::V)?;
            let rec = loss_rec(tape, x, syn, 3)?;
            let cyc = loss_cyc(tape, p, &pair, syn, Modality::V, 3)?;
            let ort = loss_ort(tape, &[(pair.homo_pooled, pair.hetero_pooled)])?;
            let s = tape.add(rec, cyc)?;
            tape.add(s, ort)
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn margin_examples() {
        // anchor 0 (L, class 1), positive 1 (V, class 1), negative 2 (L, class 0)
        let mods = [Modality::L, Modality::V, Modality::L];
        let classes = [1, 1, 0];
        assert_eq!(margin_triplets(&mods, &classes), vec![[0, 1, 2]]);

        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 0.0]));
        let pos = tape.constant(Tensor::vector(vec![2.0, 0.0]));
        let neg = tape.constant(Tensor::vector(vec![-1.0, 0.0]));
        let l = loss_margin(&mut tape, &[a, pos, neg], &mods, &classes, 0.2).unwrap();
        assert_eq!(tape.item(l), 0.0);

        // cos(i,j) = cos(i,k) = 0.5
        let s3 = 3f64.sqrt() / 2.0;
        let pos = tape.constant(Tensor::vector(vec![0.5, s3]));
        let neg = tape.constant(Tensor::vector(vec![0.5, -s3]));
        let l = loss_margin(&mut tape, &[a, pos, neg], &mods, &classes, 0.2).unwrap();
        assert!((tape.item(l) - 0.2).abs() < 1e-12);

        let l = loss_margin(&mut tape, &[a, pos], &mods[..2], &classes[..2], 0.2).unwrap();
        assert_eq!(tape.item(l), 0.0);
    }

    #[test]
    fn margin_matches_enumeration_and_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let n = 6;
            let vecs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let mods: Vec<Modality> = (0..n).map(|i| Modality::ALL[i % 3]).collect();
            let classes: Vec<i32> = (0..n).map(|_| rng.random_range(-1..=1)).collect();
            let mut total = 0.0;
            let mut count = 0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if mods[i] != mods[j] && mods[i] == mods[k] && classes[i] == classes[j] && classes[i] != classes[k] {
                            total += (0.2 - cosine_plain(&vecs[i], &vecs[j]) + cosine_plain(&vecs[i], &vecs[k])).max(0.0);
                            count += 1;
                        }
                    }
                }
            }
            let oracle = if count == 0 { 0.0 } else { total / count as f64 };
            let mut tape = Tape::new();
            let vars: Vec<Var> = vecs.iter().map(|v| tape.constant(Tensor::vector(v.clone()))).collect();
            let l = loss_margin(&mut tape, &vars, &mods, &classes, 0.2).unwrap();
            assert!((tape.item(l) - oracle).abs() < 1e-12);

            let scaled: Vec<Var> = vecs
                .iter()
                .map(|v| {
                    let c = rng.random_range(0.1..10.0);
                    tape.constant(Tensor::vector(v.iter().map(|e| e * c).collect()))
                })
                .collect();
            let l2 = loss_margin(&mut tape, &scaled, &mods, &classes, 0.2).unwrap();
            assert!((tape.item(l2) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn ort_examples() {
        let mut tape = Tape::new();
        let e0 = tape.constant(Tensor::vector(vec![1.0, 0.0]));
        let e1 = tape.constant(Tensor::vector(vec![0.0, 3.0]));
        let n0 = tape.constant(Tensor::vector(vec![-2.0, 0.0]));
        let l = loss_ort(&mut tape, &[(e0, e1), (e0, e1), (e1, e0)]).unwrap();
        assert_eq!(tape.item(l), 0.0);
        let l = loss_ort(&mut tape, &[(e0, e0), (e1, e1), (n0, n0)]).unwrap();
        assert!((tape.item(l) - 3.0).abs() < 1e-15);
        let l = loss_ort(&mut tape, &[(e0, n0), (e0, e1), (e1, e0)]).unwrap();
        assert!((tape.item(l) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn dec_examples() {
        assert!((combine_dec(1.0, 1.0, 2.0, 2.0, 0.1) - 2.4).abs() < 1e-15);
        assert_eq!(combine_dec(1.5, 0.5, 7.0, -2.0, 0.0), 2.0);
        let mut tape = Tape::new();
        let s = |t: &mut Tape, v| t.constant(Tensor::scalar(v));
        let (r, c, m, o) = (s(&mut tape, 1.0), s(&mut tape, 1.0), s(&mut tape, 2.0), s(&mut tape, 2.0));
        let l = loss_dec(&mut tape, r, c, m, o, 0.1).unwrap();
        assert!((tape.item(l) - 2.4).abs() < 1e-15);
    }
}
