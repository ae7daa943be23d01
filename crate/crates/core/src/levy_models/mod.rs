//! Lévy model families, their characteristic functions and increment samplers.

pub mod bessel;
pub mod density;
pub mod model;
pub mod sampling;

use serde::{Deserialize, Serialize};

pub use bessel::{bessel_k, BesselError};
pub use density::{density_auto, density_on_grid, Density, DensityError, UniformGrid};
pub use model::{Family, GhParams, ModelError, ModelSpec, StableParams};
pub use sampling::{sample_increments, IncrementSample, IncrementSampler, SamplingError};

/// Prior knowledge about the class a model is assumed to belong to; it only
/// feeds the theoretical cut-off rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RleClassSpec {
    pub alpha_bar: f64,
    pub eta_minus: f64,
    pub eta_plus: f64,
    pub varkappa: f64,
    #[serde(default)]
    pub a_bar: f64,
}

impl RleClassSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.alpha_bar > 0.0
            && self.alpha_bar <= 2.0
            && self.eta_minus > 0.0
            && self.eta_minus <= self.eta_plus
            && self.varkappa > 0.0
            && self.varkappa <= self.alpha_bar
            && self.a_bar >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::Invalid(format!("inconsistent class parameters {self:?}")))
        }
    }
}
