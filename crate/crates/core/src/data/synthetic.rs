//! Synthetic sentiment data with known shared and private factors.
//!
//! The shared factor is `z_c = s·y·q + r_k + σ·n`, where `y` is the label,
//! `q` a fixed unit direction, `r_k` a per-class offset orthogonal to `q`,
//! and `n` noise orthogonal to `q`. The label is therefore exactly
//! `(z_c · q) / s`. Each frame of modality `m` is
//! `strength_m · A_m z_c + B_m z_m + noise_m · ε_t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Latent, Sample};
use crate::error::{DmdError, Result};
use crate::modality::Modality;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub raw_dims: [usize; 3],
    pub shared_dim: usize,
    pub private_dim: usize,
    /// Inclusive sequence length range.
    pub min_len: usize,
    pub max_len: usize,
    /// Equal lengths across modalities within each sample.
    pub aligned: bool,
    /// Scale of the shared contribution per modality.
    pub strength: [f64; 3],
    /// Scale of the private contribution per modality.
    pub private_scale: [f64; 3],
    /// Per-frame noise standard deviation per modality.
    pub noise: [f64; 3],
    /// Norm of the per-class offsets.
    pub class_sep: f64,
    /// Spread of `z_c` around its class offset (orthogonal to the label axis).
    pub within_class: f64,
    /// Seed for the linear maps and class geometry.
    pub world_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            raw_dims: [300, 35, 74],
            shared_dim: 8,
            private_dim: 8,
            min_len: 4,
            max_len: 12,
            aligned: false,
            strength: [1.0, 0.6, 0.6],
            private_scale: [1.0, 1.0, 1.0],
            noise: [0.5, 1.0, 1.0],
            class_sep: 1.0,
            within_class: 0.3,
            world_seed: 7,
        }
    }
}

impl SynthConfig {
    /// Low-dimensional variant for quick tests.
    pub fn small() -> Self {
        Self {
            raw_dims: [12, 6, 8],
            min_len: 2,
            max_len: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.raw_dims.contains(&0) || self.shared_dim < 2 || self.private_dim == 0 {
            return Err(DmdError::Config(
                "synthetic dims must be positive and shared_dim at least 2".into(),
            ));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(DmdError::Config(format!(
                "invalid length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Label axis `q`, class offsets and the per-modality maps.
#[derive(Debug, Clone)]
pub struct World {
    pub cfg: SynthConfig,
    pub label_axis: Vec<f64>,
    /// Offsets for classes −3..=3, each orthogonal to `label_axis`.
    pub class_offsets: Vec<Vec<f64>>,
    /// `A_m`, `d_m × shared_dim`.
    pub shared_maps: [Tensor; 3],
    /// `B_m`, `d_m × private_dim`.
    pub private_maps: [Tensor; 3],
}

/// Scale relating the label to the projection of `z_c` on the label axis.
const LABEL_SCALE: f64 = 0.5;

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn remove_component(v: &mut [f64], axis: &[f64]) {
    let dot: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(axis).for_each(|(a, b)| *a -= dot * b);
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

impl World {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.world_seed);
        let mut label_axis = gaussian(&mut rng, cfg.shared_dim);
        normalize(&mut label_axis);
        let class_offsets = (0..7)
            .map(|_| {
                let mut r = gaussian(&mut rng, cfg.shared_dim);
                remove_component(&mut r, &label_axis);
                normalize(&mut r);
                r.iter_mut().for_each(|x| *x *= cfg.class_sep);
                r
            })
            .collect();
        let map = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let scale = 1.0 / (cols as f64).sqrt();
            let data = gaussian(rng, rows * cols).into_iter().map(|x| x * scale).collect();
            Tensor::matrix(rows, cols, data).expect("map shape")
        };
        let shared_maps = cfg.raw_dims.map(|d| map(&mut rng, d, cfg.shared_dim));
        let private_maps = cfg.raw_dims.map(|d| map(&mut rng, d, cfg.private_dim));
        Ok(Self {
            cfg: cfg.clone(),
            label_axis,
            class_offsets,
            shared_maps,
            private_maps,
        })
    }

    /// Label implied by a shared factor.
    pub fn label_of(&self, z_c: &[f64]) -> f64 {
        z_c.iter().zip(&self.label_axis).map(|(a, b)| a * b).sum::<f64>() / LABEL_SCALE
    }

    /// `strength_m · A_m z_c`, the part of every frame that depends only on `z_c`.
    pub fn shared_component(&self, m: Modality, z_c: &[f64]) -> Vec<f64> {
        let a = &self.shared_maps[m.index()];
        let s = self.cfg.strength[m.index()];
        (0..a.rows())
            .map(|r| s * a.row(r).iter().zip(z_c).map(|(x, z)| x * z).sum::<f64>())
            .collect()
    }

    pub fn private_component(&self, m: Modality, z_m: &[f64]) -> Vec<f64> {
        let b = &self.private_maps[m.index()];
        let s = self.cfg.private_scale[m.index()];
        (0..b.rows())
            .map(|r| s * b.row(r).iter().zip(z_m).map(|(x, z)| x * z).sum::<f64>())
            .collect()
    }

    /// Draws one sample's latent record.
    fn draw_latent(&self, rng: &mut ChaCha8Rng) -> (f64, Latent) {
        let class = rng.random_range(-3i32..=3);
        // Jitter stays strictly inside the bin so the label rounds back to `class`.
        let lo = if class == -3 { 0.0 } else { -0.45 };
        let hi = if class == 3 { 0.0 } else { 0.45 };
        let label = class as f64 + if hi > lo { rng.random_range(lo..hi) } else { 0.0 };
        let mut noise = gaussian(rng, self.cfg.shared_dim);
        remove_component(&mut noise, &self.label_axis);
        let offset = &self.class_offsets[(class + 3) as usize];
        let z_c = (0..self.cfg.shared_dim)
            .map(|i| LABEL_SCALE * label * self.label_axis[i] + offset[i] + self.cfg.within_class * noise[i])
            .collect();
        let z_m = [0, 1, 2].map(|_| gaussian(rng, self.cfg.private_dim));
        (label, Latent { class, z_c, z_m })
    }

    pub fn sample(&self, id: String, rng: &mut ChaCha8Rng) -> Sample {
        let (label, latent) = self.draw_latent(rng);
        let c = &self.cfg;
        let common_len = rng.random_range(c.min_len..=c.max_len);
        let seqs = Modality::ALL.map(|m| {
            let t = if c.aligned {
                common_len
            } else {
                rng.random_range(c.min_len..=c.max_len)
            };
            let base: Vec<f64> = self
                .shared_component(m, &latent.z_c)
                .iter()
                .zip(self.private_component(m, &latent.z_m[m.index()]))
                .map(|(a, b)| a + b)
                .collect();
            let sigma = c.noise[m.index()];
            let mut data = Vec::with_capacity(t * base.len());
            for _ in 0..t {
                for &b in &base {
                    data.push(b + sigma * rng.sample::<f64, _>(StandardNormal));
                }
            }
            Tensor::matrix(t, base.len(), data).expect("frame shape")
        });
        Sample {
            id,
            seqs,
            label,
            latent: Some(latent),
        }
    }
}

/// `n` samples from the world fixed by `cfg.world_seed`; draws depend on `seed`.
pub fn generate(n: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(DmdError::Config("sample count must be at least 1".into()));
    }
    let world = World::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|i| world.sample(format!("s{seed}_{i:05}"), &mut rng)).collect())
}
