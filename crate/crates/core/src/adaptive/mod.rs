//! Data-driven choice among the estimates of a decreasing ladder of cut-offs.
//!
//! Each rung yields an estimate `alpha~_k` with plug-in variance `sigma_k^2`.
//! Stagewise aggregation mixes them from the largest cut-off downwards,
//! `alpha^_k = gamma_k alpha~_k + (1 - gamma_k) alpha^_{k-1}`, where the
//! mixing weight shrinks as `alpha~_k` drifts away from the running estimate
//! relative to critical values calibrated under a null model.

pub mod aggregate;
pub mod calibrate;
pub mod rungs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecf::EcfError;
use crate::levy_models::SamplingError;
use crate::spectral::SpectralError;

pub use aggregate::{aggregate, aggregate_or_fallback, aggregate_rungs, AggregationRow, AggregationTrace};
pub use calibrate::{
    calibrate_critical_values, calibrate_from_rungs, calibrate_from_rungs_with_margin, critical_value_grid,
    normal_abs_moment, null_losses, null_rungs, CalibrationMeta, CriticalValues, NullDesign, RungLoss, DEFAULT_MARGIN,
};
pub use rungs::{estimate_ladder, estimate_rung, rung_grid, EstimatorSettings, RungEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptiveError {
    #[error("invalid ladder: {0}")]
    Ladder(String),
    #[error("inputs have inconsistent lengths")]
    Lengths,
    #[error("variance at rung {rung} must be positive and finite, got {value}")]
    Sigma { rung: usize, value: f64 },
    #[error("no admissible rung on the ladder")]
    NoAdmissibleRung,
    #[error("critical value search exhausted at rung {rung}: smallest loss {loss:.4} exceeds {bound:.4}")]
    SearchExhausted { rung: usize, loss: f64, bound: f64 },
    #[error("invalid setting: {0}")]
    Settings(String),
    #[error("rung {rung} (U = {cutoff}): {source}")]
    Rung { rung: usize, cutoff: f64, source: SpectralError },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Ecf(#[from] EcfError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Strictly decreasing positive cut-offs `U_1 > ... > U_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CutoffLadder {
    cutoffs: Vec<f64>,
}

impl CutoffLadder {
    pub fn new(cutoffs: Vec<f64>) -> Result<Self, AdaptiveError> {
        if cutoffs.is_empty() {
            return Err(AdaptiveError::Ladder("empty".into()));
        }
        if cutoffs.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
            return Err(AdaptiveError::Ladder("cut-offs must be positive and finite".into()));
        }
        if cutoffs.windows(2).any(|w| w[1] >= w[0]) {
            return Err(AdaptiveError::Ladder("cut-offs must be strictly decreasing".into()));
        }
        Ok(CutoffLadder { cutoffs })
    }

    /// `U_k = first * ratio^{-(k-1)}`, `k = 1..=rungs`.
    pub fn geometric(first: f64, ratio: f64, rungs: usize) -> Result<Self, AdaptiveError> {
        if !(ratio > 1.0) {
            return Err(AdaptiveError::Ladder(format!("ratio {ratio} must exceed 1")));
        }
        Self::new((0..rungs).map(|k| first * ratio.powi(-(k as i32))).collect())
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn len(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cutoffs.is_empty()
    }
}

impl Default for CutoffLadder {
    fn default() -> Self {
        default_ladder()
    }
}

impl TryFrom<Vec<f64>> for CutoffLadder {
    type Error = AdaptiveError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<CutoffLadder> for Vec<f64> {
    fn from(l: CutoffLadder) -> Self {
        l.cutoffs
    }
}

/// Thirty rungs from 100 down by a factor 1.25.
pub fn default_ladder() -> CutoffLadder {
    CutoffLadder::geometric(100.0, 1.25, 30).expect("valid constants")
}

pub fn triangle_kernel(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        1.0 - x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladder_values() {
        let l = default_ladder();
        assert_eq!(l.len(), 30);
        assert_eq!(l.cutoffs()[0], 100.0);
        assert!((l.cutoffs()[1] - 80.0).abs() < 1e-12);
        assert!((l.cutoffs()[29] - 100.0 * 1.25f64.powi(-29)).abs() < 1e-12);
    }

    #[test]
    fn kernel_values() {
        assert_eq!(triangle_kernel(0.0), 1.0);
        assert_eq!(triangle_kernel(1.0), 0.0);
        assert_eq!(triangle_kernel(2.0), 0.0);
        assert_eq!(triangle_kernel(0.25), 0.75);
        assert_eq!(triangle_kernel(-0.5), 0.0);
    }

    #[test]
    fn ladder_rejects_bad_orders() {
        assert!(CutoffLadder::new(vec![]).is_err());
        assert!(CutoffLadder::new(vec![2.0, 2.0]).is_err());
        assert!(CutoffLadder::new(vec![1.0, 2.0]).is_err());
        assert!(CutoffLadder::new(vec![2.0, -1.0]).is_err());
        let l: CutoffLadder = serde_json::from_str("[3.0, 2.0, 1.0]").unwrap();
        assert_eq!(l.len(), 3);
        assert!(serde_json::from_str::<CutoffLadder>("[1.0, 2.0]").is_err());
    }
}
