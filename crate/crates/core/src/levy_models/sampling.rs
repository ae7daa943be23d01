use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::density::{density_auto, DensityError};
use super::model::{Family, ModelSpec};
use crate::rng::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Density(#[from] DensityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSample {
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: u64,
}

/// Reusable sampler for the increments `X_{i dt} - X_{(i-1) dt}` of one model.
///
/// Stable jump parts are drawn exactly (Chambers-Mallows-Stuck plus an
/// independent Gaussian for the diffusion). Everything else goes through the
/// inverted density and its cumulative trapezoid.
#[derive(Debug, Clone)]
pub enum IncrementSampler {
    Stable { scale: f64, alpha: f64, gauss_sd: f64, shift: f64 },
    InverseCdf { x0: f64, dx: f64, cdf: Vec<f64> },
}

impl IncrementSampler {
    pub fn new(model: &ModelSpec, dt: f64) -> Result<Self, SamplingError> {
        if !(dt > 0.0) {
            return Err(SamplingError::BadStep(dt));
        }
        match model.family {
            Family::SymmetricStable | Family::StablePlusDiffusion => {
                let s = model.stable.expect("validated stable model");
                Ok(IncrementSampler::Stable {
                    scale: (s.eta * dt).powf(1.0 / s.alpha),
                    alpha: s.alpha,
                    gauss_sd: model.a * dt.sqrt(),
                    shift: model.mu * dt,
                })
            }
            Family::GeneralizedHyperbolic => Self::inverse_cdf(model, dt),
        }
    }

    /// Inverse-CDF sampler regardless of family.
    pub fn inverse_cdf(model: &ModelSpec, dt: f64) -> Result<Self, SamplingError> {
        if !(dt > 0.0) {
            return Err(SamplingError::BadStep(dt));
        }
        let d = density_auto(model, dt)?;
        let dx = d.grid.dx;
        let mut cdf = Vec::with_capacity(d.values.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in d.values.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cdf.push(acc);
        }
        Ok(IncrementSampler::InverseCdf { x0: d.grid.x(0), dx, cdf })
    }

    fn draw_one(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            IncrementSampler::Stable { scale, alpha, gauss_sd, shift } => {
                let v = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
                let w = -(1.0 - rng.random::<f64>()).ln();
                let a = *alpha;
                let x = (a * v).sin() / v.cos().powf(1.0 / a) * (((1.0 - a) * v).cos() / w).powf((1.0 - a) / a);
                let mut out = shift + scale * x;
                if *gauss_sd > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    out += gauss_sd * z;
                }
                out
            }
            IncrementSampler::InverseCdf { x0, dx, cdf } => {
                let total = *cdf.last().expect("non-empty cdf");
                let target = rng.random::<f64>() * total;
                let j = cdf.partition_point(|c| *c <= target).clamp(1, cdf.len() - 1) - 1;
                let width = cdf[j + 1] - cdf[j];
                let frac = if width > 0.0 { (target - cdf[j]) / width } else { 0.5 };
                x0 + (j as f64 + frac) * dx
            }
        }
    }

    pub fn draw(&self, dt: f64, n: usize, seed: u64) -> Result<IncrementSample, SamplingError> {
        if n == 0 {
            return Err(SamplingError::EmptySample);
        }
        let mut rng = rng_from_seed(seed);
        let values = (0..n).map(|_| self.draw_one(&mut rng)).collect();
        Ok(IncrementSample { dt, values, seed })
    }
}

pub fn sample_increments(model: &ModelSpec, dt: f64, n: usize, seed: u64) -> Result<IncrementSample, SamplingError> {
    if n == 0 {
        return Err(SamplingError::EmptySample);
    }
    IncrementSampler::new(model, dt)?.draw(dt, n, seed)
}
