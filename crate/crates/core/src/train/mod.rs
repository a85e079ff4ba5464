//! Objective, optimizer and training loop.

mod adam;
pub mod loss;
mod trainer;

pub use adam::Adam;
pub use loss::{loss_gradient_penalty, loss_latent, loss_spatial, loss_wasserstein};
pub use trainer::{beyond_boundary_posttrain, Freeze, StepMetrics, Trainer};

use alloc::format;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::data::Sampling;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Gradient-penalty weight.
    pub lambda: f64,
    /// Coordinate-consistency weight.
    pub alpha: f64,
    /// Latent-consistency weight (patch-guided mode).
    pub beta_q: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            alpha: 100.0,
            beta_q: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub steps: u64,
    pub sampling: Sampling,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_g: 1e-4,
            lr_d: 4e-4,
            beta1: 0.0,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch: 32,
            steps: 1000,
            sampling: Sampling::Discrete,
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return Err(Error::Invalid("learning rates must be positive".into()));
        }
        if !(w.lambda >= 0.0 && w.alpha >= 0.0 && w.beta_q >= 0.0) {
            return Err(Error::Invalid("loss weights must be non-negative".into()));
        }
        if self.batch < 2 {
            return Err(Error::Invalid(format!(
                "batch size {} is below 2",
                self.batch
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Invalid("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `[batch, dim]` latents with i.i.d. components uniform on `[-1, 1]`.
pub fn sample_latent(dim: usize, batch: usize, rng: &mut impl Rng) -> Tensor<f32> {
    let u = Uniform::new_inclusive(-1.0f32, 1.0).expect("valid bounds");
    let data = (0..dim * batch).map(|_| u.sample(rng)).collect();
    Tensor::from_parts(alloc::vec![batch, dim], data)
}

/// Spherical interpolation between `z1` and `z2`; linear when they are nearly parallel.
pub fn slerp(z1: &[f32], z2: &[f32], t: f64) -> Result<Vec<f32>> {
    if z1.len() != z2.len() {
        return Err(Error::Shape(format!(
            "latents of length {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    let n1 = libm::sqrt(z1.iter().map(|&v| v as f64 * v as f64).sum());
    let n2 = libm::sqrt(z2.iter().map(|&v| v as f64 * v as f64).sum());
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::Invalid("slerp of a zero vector".into()));
    }
    if t == 0.0 {
        return Ok(z1.to_vec());
    }
    if t == 1.0 {
        return Ok(z2.to_vec());
    }
    let dot: f64 = z1.iter().zip(z2).map(|(&a, &b)| a as f64 * b as f64).sum();
    let omega = libm::acos((dot / (n1 * n2)).clamp(-1.0, 1.0));
    let (a, b) = if omega < 1e-6 {
        (1.0 - t, t)
    } else {
        let s = libm::sin(omega);
        (libm::sin((1.0 - t) * omega) / s, libm::sin(t * omega) / s)
    };
    Ok(z1
        .iter()
        .zip(z2)
        .map(|(&p, &q)| (a * p as f64 + b * q as f64) as f32)
        .collect())
}

/// `eps_i * s + (1 - eps_i) * x` for each sample `i` of equally shaped batches.
pub fn gp_mix(s: &Tensor<f32>, x: &Tensor<f32>, eps: &[f32]) -> Result<Tensor<f32>> {
    if s.shape() != x.shape() || s.shape().first() != Some(&eps.len()) {
        return Err(Error::Shape(format!(
            "mixing {:?} with {:?} by {} weights",
            s.shape(),
            x.shape(),
            eps.len()
        )));
    }
    let per = s.len() / eps.len();
    let data = s
        .data()
        .iter()
        .zip(x.data())
        .enumerate()
        .map(|(k, (&a, &b))| {
            let e = eps[k / per];
            e * a + (1.0 - e) * b
        })
        .collect();
    Tensor::new(s.shape().to_vec(), data)
}

/// A penalty sample and its per-sample mixing weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GpSample {
    pub mixed: Tensor<f32>,
    pub eps: Vec<f32>,
}

/// Mixes generated `s` with real `x` using weights drawn uniformly from `[0, 1]`.
pub fn gp_interpolate(s: &Tensor<f32>, x: &Tensor<f32>, rng: &mut impl Rng) -> Result<GpSample> {
    let b = *s
        .shape()
        .first()
        .ok_or_else(|| Error::Shape("empty batch".into()))?;
    let u = Uniform::new_inclusive(0.0f32, 1.0).expect("valid bounds");
    let eps: Vec<f32> = (0..b).map(|_| u.sample(rng)).collect();
    Ok(GpSample {
        mixed: gp_mix(s, x, &eps)?,
        eps,
    })
}
