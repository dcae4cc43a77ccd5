use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::config::AlignMode;
use crate::error::{DmdError, Result};
use crate::tensor::Tensor;

/// Samples padded per modality to the batch's longest sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    pub labels: Vec<f64>,
    /// Per sample, `T_max_m × d_m` with zero rows past the valid length.
    pub inputs: Vec<[Tensor; 3]>,
    pub lens: Vec<[usize; 3]>,
    /// `B × T_max_m` per modality, 1 for valid steps and 0 for padding.
    pub masks: [Tensor; 3],
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn from_samples(samples: &[&Sample], mode: AlignMode) -> Result<Self> {
        if samples.is_empty() {
            return Err(DmdError::Data("cannot build an empty batch".into()));
        }
        if mode == AlignMode::Aligned {
            if let Some(s) = samples.iter().find(|s| !s.is_aligned()) {
                return Err(DmdError::Data(format!(
                    "sample {} has lengths {:?}; aligned mode needs equal lengths (resample first)",
                    s.id,
                    s.lens()
                )));
            }
        }
        let t_max = [0, 1, 2].map(|m| samples.iter().map(|s| s.seqs[m].rows()).max().unwrap_or(0));
        let inputs = samples
            .iter()
            .map(|s| {
                [0, 1, 2].map(|m| {
                    let t = &s.seqs[m];
                    let mut data = t.data().to_vec();
                    data.resize(t_max[m] * t.cols(), 0.0);
                    Tensor::matrix(t_max[m], t.cols(), data).expect("padded shape")
                })
            })
            .collect();
        let lens: Vec<[usize; 3]> = samples.iter().map(|s| s.lens()).collect();
        let masks = [0, 1, 2].map(|m| {
            let data = lens
                .iter()
                .flat_map(|l| (0..t_max[m]).map(move |t| if t < l[m] { 1.0 } else { 0.0 }))
                .collect();
            Tensor::matrix(samples.len(), t_max[m], data).expect("mask shape")
        });
        Ok(Self {
            ids: samples.iter().map(|s| s.id.clone()).collect(),
            labels: samples.iter().map(|s| s.label).collect(),
            inputs,
            lens,
            masks,
        })
    }
}

/// Sample order for one epoch; the same `(seed, epoch)` always gives the same order.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Consecutive chunks of `order`, the last one possibly shorter.
pub fn make_batches(samples: &[Sample], order: &[usize], batch_size: usize, mode: AlignMode) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(DmdError::Config("batch_size must be at least 1".into()));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let picked: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            Batch::from_samples(&picked, mode)
        })
        .collect()
}

/// Nearest-neighbour temporal resampling of `t` to `len` rows.
pub fn resample_nearest(t: &Tensor, len: usize) -> Tensor {
    let src = t.rows();
    let mut data = Vec::with_capacity(len * t.cols());
    for i in 0..len {
        let j = (((i as f64 + 0.5) * src as f64 / len as f64).floor() as usize).min(src - 1);
        data.extend_from_slice(t.row(j));
    }
    Tensor::matrix(len, t.cols(), data).expect("resampled shape")
}

/// Resamples every modality to the median of the sample's three lengths.
pub fn resample_aligned(s: &Sample) -> Sample {
    let mut lens = s.lens();
    lens.sort_unstable();
    let target = lens[1];
    Sample {
        seqs: [0, 1, 2].map(|m| {
            if s.seqs[m].rows() == target {
                s.seqs[m].clone()
            } else {
                resample_nearest(&s.seqs[m], target)
            }
        }),
        ..s.clone()
    }
}

/// Builds batches on a worker thread and hands them over through a bounded
/// queue, in order.
pub struct Prefetcher {
    rx: Receiver<Result<Batch>>,
    handle: Option<JoinHandle<()>>,
}

impl Prefetcher {
    pub fn spawn(samples: Arc<Vec<Sample>>, order: Vec<usize>, batch_size: usize, mode: AlignMode, depth: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(DmdError::Config("batch_size must be at least 1".into()));
        }
        let (tx, rx) = sync_channel(depth.max(1));
        let handle = thread::spawn(move || {
            for chunk in order.chunks(batch_size) {
                let picked: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
                if tx.send(Batch::from_samples(&picked, mode)).is_err() {
                    return;
                }
            }
        });
        Ok(Self {
            rx,
            handle: Some(handle),
        })
    }
}

impl Iterator for Prefetcher {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rx.recv().ok()
    }
}

impl Drop for Prefetcher {
    fn drop(&mut self) {
        // Dropping the receiver makes a blocked send fail, so the worker exits.
        let (_, dummy) = sync_channel(1);
        drop(std::mem::replace(&mut self.rx, dummy));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthConfig};

    fn with_lens(id: &str, lens: [usize; 3]) -> Sample {
        let dims = [2, 3, 1];
        Sample {
            id: id.into(),
            seqs: [0, 1, 2].map(|m| {
                let n = lens[m] * dims[m];
                Tensor::matrix(lens[m], dims[m], (1..=n).map(|v| v as f64).collect()).unwrap()
            }),
            label: 0.5,
            latent: None,
        }
    }

    #[test]
    fn ten_samples_fit_one_batch() {
        let samples = generate(10, 0, &SynthConfig::small()).unwrap();
        let order = epoch_order(10, 0, 0);
        let b = make_batches(&samples, &order, 16, AlignMode::Unaligned).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 10);
        let b = make_batches(&samples, &order, 4, AlignMode::Unaligned).unwrap();
        assert_eq!(b.iter().map(Batch::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert!(make_batches(&samples, &order, 0, AlignMode::Unaligned).is_err());
    }

    #[test]
    fn padding_and_masks() {
        let a = with_lens("a", [3, 3, 3]);
        let b = with_lens("b", [7, 2, 5]);
        let batch = Batch::from_samples(&[&a, &b], AlignMode::Unaligned).unwrap();
        assert_eq!(batch.masks[0].shape(), &[2, 7]);
        let sums: Vec<f64> = (0..2).map(|r| batch.masks[0].row(r).iter().sum()).collect();
        assert_eq!(sums, vec![3.0, 7.0]);
        let padded = &batch.inputs[0][0];
        assert_eq!(padded.shape(), &[7, 2]);
        assert_eq!(padded.row(2), a.seqs[0].row(2));
        assert!(padded.data()[6..].iter().all(|&v| v == 0.0));
        assert_eq!(batch.lens, vec![[3, 3, 3], [7, 2, 5]]);
    }

    #[test]
    fn aligned_mode_requires_equal_lengths() {
        let s = with_lens("odd", [3, 4, 6]);
        let err = Batch::from_samples(&[&s], AlignMode::Aligned).unwrap_err();
        assert!(err.to_string().contains("odd"));
        let r = resample_aligned(&s);
        assert_eq!(r.lens(), [4, 4, 4]);
        Batch::from_samples(&[&r], AlignMode::Aligned).unwrap();
    }

    #[test]
    fn nearest_resample_examples() {
        let t = Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(resample_nearest(&t, 4).data(), &[1.0, 1.0, 2.0, 2.0]);
        let t = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(resample_nearest(&t, 2).data(), &[2.0, 4.0]);
        assert_eq!(resample_nearest(&t, 4), t);
    }

    #[test]
    fn epoch_orders_are_reproducible() {
        assert_eq!(epoch_order(50, 3, 2), epoch_order(50, 3, 2));
        assert_ne!(epoch_order(50, 3, 2), epoch_order(50, 3, 3));
        let mut o = epoch_order(50, 3, 2);
        o.sort();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn prefetcher_matches_direct_batching() {
        let samples = generate(23, 1, &SynthConfig::small()).unwrap();
        let order = epoch_order(23, 1, 0);
        let direct = make_batches(&samples, &order, 5, AlignMode::Unaligned).unwrap();
        let fetched: Vec<Batch> = Prefetcher::spawn(Arc::new(samples), order, 5, AlignMode::Unaligned, 2)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(direct, fetched);
    }
}
