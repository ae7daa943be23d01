//! The spectral cut-off estimator of the fractional order.
//!
//! `Y(u) = log(-log |phi(u)|^2)` is affine in `log u` for stable laws, with
//! slope `alpha`. The estimator integrates a truncated plug-in version of `Y`
//! against a weight with zero mean and unit log-moment on `[ell U, U]`.

pub mod cutoff;
pub mod diffusion;
pub mod truncation;
pub mod variance;
pub mod weight;

use thiserror::Error;

use crate::ecf::EcfError;
use crate::levy_models::ModelError;

pub use cutoff::{theoretical_cutoff, Regime};
pub use diffusion::{estimate_alpha_xi, rho_xi, xi_curve, xi_functional};
pub use truncation::{
    linearization_residual, oracle_levels, prior_levels, truncate, y_curve, zeta_coefficients, LinearizationReport,
    SpectralCurve, TruncationLevels,
};
pub use variance::{linear_variance, variance_sigma, KernelKind, LinearFunctional, VarianceMode, VarianceResult};
pub use weight::{bias_ru, bias_ru_discrete, build_weight, estimate_alpha, DiscreteWeight, WeightSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("value {value} outside (0, 1) at u = {u}")]
    Domain { u: f64, value: f64 },
    #[error("grid does not cover {what}")]
    Coverage { what: String },
    #[error("truncation levels do not bracket the oracle levels at u = {u}")]
    Bracketing { u: f64 },
    #[error("|phi~(xi u)| vanishes at u = {u}")]
    VanishingDenominator { u: f64 },
    #[error("noise level {eps} too large for the cut-off rule")]
    EpsTooLarge { eps: f64 },
    #[error("weight support fraction must lie in (0, 1), got {0}")]
    SingularWeight(f64),
    #[error("invalid truncation levels: {0}")]
    Levels(String),
    #[error(transparent)]
    Ecf(#[from] EcfError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
