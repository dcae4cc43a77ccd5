//! Samples, the synthetic generator, CSV ingestion and batching.

mod batch;
mod io;
mod synthetic;

pub use batch::{epoch_order, make_batches, resample_aligned, resample_nearest, Batch, Prefetcher};
pub use io::{load_features, write_dataset};
pub use synthetic::{generate, SynthConfig, World};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DmdError, Result};
use crate::modality::Modality;
use crate::tensor::Tensor;

/// Generator-side ground truth for one synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    /// Sentiment bin in `-3..=3`.
    pub class: i32,
    /// Shared factor.
    pub z_c: Vec<f64>,
    /// Private factors for L, V, A.
    pub z_m: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `T_m × d_m` per modality, in L, V, A order.
    pub seqs: [Tensor; 3],
    pub label: f64,
    pub latent: Option<Latent>,
}

impl Sample {
    pub fn seq(&self, m: Modality) -> &Tensor {
        &self.seqs[m.index()]
    }

    pub fn lens(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.seqs[i].rows())
    }

    pub fn is_aligned(&self) -> bool {
        let l = self.lens();
        l[0] == l[1] && l[1] == l[2]
    }

    /// Checks feature widths against `raw_dims` and the label range.
    pub fn validate(&self, raw_dims: [usize; 3]) -> Result<()> {
        for m in Modality::ALL {
            let t = self.seq(m);
            if t.rank() != 2 || t.cols() != raw_dims[m.index()] {
                return Err(DmdError::Data(format!(
                    "sample {}: modality {m} has {} features, expected {}",
                    self.id,
                    t.cols(),
                    raw_dims[m.index()]
                )));
            }
        }
        if !(-3.0..=3.0).contains(&self.label) {
            return Err(DmdError::Data(format!(
                "sample {}: label {} is outside [-3, 3]",
                self.id, self.label
            )));
        }
        Ok(())
    }
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Seeded shuffle followed by a 70/15/15 split. Validation and test each get
/// at least one sample when `n ≥ 3`.
pub fn split(samples: &[Sample], seed: u64) -> Splits {
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_val = (n as f64 * 0.15).round() as usize;
    let mut n_test = n_val;
    if n >= 3 {
        n_val = n_val.max(1);
        n_test = n_test.max(1);
    }
    let n_train = n - n_val - n_test;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Splits {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    }
}
