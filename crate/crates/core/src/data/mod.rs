//! Synthetic paired-modality classification data.
//!
//! Each class owns a latent center. A sample perturbs its class center, and
//! both modalities are noisy random projections of that latent: the primary
//! modality as `M` segments, the privileged modality as `r` frames per
//! segment. The informativeness knob blends the privileged projection's
//! input between the sample latent and pure noise.

mod io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use io::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub primary_dim: usize,
    pub privileged_dim: usize,
    /// Segments per sample (`M`).
    pub segments: usize,
    /// Privileged frames per segment (`r`).
    pub frames_per_segment: usize,
    pub latent_dim: usize,
    /// Standard deviation of the per-sample latent perturbation.
    pub sample_sigma: f64,
    /// Observation noise on the primary modality.
    pub noise_sigma: f64,
    /// Privileged observation noise as a multiple of `noise_sigma`.
    pub privileged_noise_scale: f64,
    pub privileged_informativeness: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            samples_per_class: 100,
            primary_dim: 32,
            privileged_dim: 16,
            segments: 3,
            frames_per_segment: 2,
            latent_dim: 6,
            sample_sigma: 0.5,
            noise_sigma: 3.0,
            privileged_noise_scale: 0.0,
            privileged_informativeness: 0.9,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_classes", self.num_classes),
            ("samples_per_class", self.samples_per_class),
            ("primary_dim", self.primary_dim),
            ("privileged_dim", self.privileged_dim),
            ("segments", self.segments),
            ("frames_per_segment", self.frames_per_segment),
            ("latent_dim", self.latent_dim),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("dataset.{key}"), "must be positive"));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::config("dataset.num_classes", "need at least 2 classes"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("dataset.noise_sigma", "must be finite and non-negative"));
        }
        if !(self.sample_sigma >= 0.0 && self.sample_sigma.is_finite()) {
            return Err(Error::config("dataset.sample_sigma", "must be finite and non-negative"));
        }
        if !(self.privileged_noise_scale >= 0.0 && self.privileged_noise_scale.is_finite()) {
            return Err(Error::config(
                "dataset.privileged_noise_scale",
                "must be finite and non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.privileged_informativeness) {
            return Err(Error::config(
                "dataset.privileged_informativeness",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn frames_per_sample(&self) -> usize {
        self.segments * self.frames_per_segment
    }

    pub fn num_samples(&self) -> usize {
        self.num_classes * self.samples_per_class
    }
}

/// One `(x, x*, y)` training tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: u64,
    pub label: usize,
    /// `M` primary-modality segments.
    pub primary: Vec<Tensor>,
    /// `M · r` privileged frames; frames `r·k .. r·(k+1)` belong to segment `k`.
    pub privileged: Vec<Tensor>,
}

impl PairedSample {
    pub fn num_segments(&self) -> usize {
        self.primary.len()
    }

    /// Elementwise mean of the raw privileged frames.
    pub fn privileged_mean(&self) -> Result<Tensor> {
        Tensor::mean_of(&self.privileged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 70/10/20 split from a hash of the sample id alone.
pub fn split_of(id: u64) -> Split {
    match mix64(id) % 10 {
        0..=6 => Split::Train,
        7 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub samples: Vec<PairedSample>,
}

impl Dataset {
    pub fn split(&self, which: Split) -> Vec<&PairedSample> {
        self.samples.iter().filter(|s| split_of(s.id) == which).collect()
    }

    pub fn train(&self) -> Vec<&PairedSample> {
        self.split(Split::Train)
    }

    pub fn val(&self) -> Vec<&PairedSample> {
        self.split(Split::Val)
    }

    pub fn test(&self) -> Vec<&PairedSample> {
        self.split(Split::Test)
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn project(m: &[f64], rows: usize, z: &[f64]) -> Vec<f64> {
    let k = z.len();
    (0..rows)
        .map(|i| m[i * k..(i + 1) * k].iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

fn add_noise(rng: &mut ChaCha8Rng, v: Vec<f64>, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return v;
    }
    let noise = normal_vec(rng, v.len(), sigma);
    v.into_iter().zip(noise).map(|(a, b)| a + b).collect()
}

/// Deterministically generate the dataset described by `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let l = spec.latent_dim;
    let rho = spec.privileged_informativeness;
    let priv_sigma = spec.noise_sigma * spec.privileged_noise_scale;

    let centers: Vec<Vec<f64>> = (0..spec.num_classes).map(|_| normal_vec(&mut rng, l, 1.0)).collect();
    let proj_scale = 1.0 / (l as f64).sqrt();
    let a = normal_vec(&mut rng, spec.primary_dim * l, proj_scale);
    let b = normal_vec(&mut rng, spec.privileged_dim * l, proj_scale);

    let mut samples = Vec::with_capacity(spec.num_samples());
    for s in 0..spec.samples_per_class {
        for (label, center) in centers.iter().enumerate() {
            let id = (s * spec.num_classes + label) as u64;
            let perturb = normal_vec(&mut rng, l, spec.sample_sigma);
            let z: Vec<f64> = center.iter().zip(&perturb).map(|(c, p)| c + p).collect();

            let mut primary = Vec::with_capacity(spec.segments);
            let mut privileged = Vec::with_capacity(spec.frames_per_sample());
            for _ in 0..spec.segments {
                let x = add_noise(&mut rng, project(&a, spec.primary_dim, &z), spec.noise_sigma);
                primary.push(Tensor::vector(&x));
                for _ in 0..spec.frames_per_segment {
                    let xi = normal_vec(&mut rng, l, 1.0);
                    let mixed: Vec<f64> = z.iter().zip(&xi).map(|(zv, nv)| rho * zv + (1.0 - rho) * nv).collect();
                    let xs = add_noise(&mut rng, project(&b, spec.privileged_dim, &mixed), priv_sigma);
                    privileged.push(Tensor::vector(&xs));
                }
            }
            samples.push(PairedSample {
                id,
                label,
                primary,
                privileged,
            });
        }
    }
    Ok(Dataset {
        spec: spec.clone(),
        samples,
    })
}

/// Concatenate the primary segments into a single input vector. The
/// privileged frames are returned as-is for peak-frame selection.
pub fn flatten_nonsequential(sample: &PairedSample) -> Result<(Tensor, &[Tensor])> {
    Ok((Tensor::concat(&sample.primary)?, &sample.privileged))
}

/// Inverse of [`flatten_nonsequential`] for the primary part.
pub fn unflatten_primary(flat: &Tensor, segments: usize) -> Result<Vec<Tensor>> {
    if segments == 0 || flat.len() % segments != 0 {
        return Err(Error::contract(format!(
            "cannot split {} values into {segments} segments",
            flat.len()
        )));
    }
    let d = flat.len() / segments;
    Ok(flat.data().chunks(d).map(Tensor::vector).collect())
}
