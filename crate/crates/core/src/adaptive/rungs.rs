//! One spectral estimate and its plug-in variance per rung of the ladder.

use serde::{Deserialize, Serialize};

use super::{AdaptiveError, CutoffLadder};
use crate::ecf::{CfEstimate, FreqGrid};
use crate::spectral::{
    build_weight, estimate_alpha, linear_variance, variance_sigma, xi_curve, xi_functional, y_curve, KernelKind,
    TruncationLevels, VarianceMode,
};

fn default_ell() -> f64 {
    0.1
}
fn default_nodes_per_cutoff() -> usize {
    40
}

/// Everything the per-rung estimator needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    /// Lower support fraction of the weight.
    #[serde(default = "default_ell")]
    pub ell: f64,
    /// Grid intervals per cut-off length; `ell * nodes_per_cutoff` must be an integer.
    #[serde(default = "default_nodes_per_cutoff")]
    pub nodes_per_cutoff: usize,
    #[serde(default)]
    pub levels: TruncationLevels,
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default = "default_mode")]
    pub variance_mode: VarianceMode,
    /// Frequency ratio of the diffusion-robust variant; `None` for the plain estimator.
    #[serde(default)]
    pub xi: Option<f64>,
    /// Largest fraction of truncated support nodes a rung may have and still be used.
    #[serde(default)]
    pub max_clipped_fraction: f64,
}

fn default_mode() -> VarianceMode {
    VarianceMode::Pointwise
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            ell: default_ell(),
            nodes_per_cutoff: default_nodes_per_cutoff(),
            levels: TruncationLevels::default(),
            kernel: KernelKind::default(),
            variance_mode: default_mode(),
            xi: None,
            max_clipped_fraction: 0.0,
        }
    }
}

impl EstimatorSettings {
    pub fn validate(&self) -> Result<(), AdaptiveError> {
        if !(self.ell > 0.0 && self.ell < 1.0) {
            return Err(AdaptiveError::Settings(format!("ell = {} outside (0, 1)", self.ell)));
        }
        let lo = self.ell * self.nodes_per_cutoff as f64;
        if (lo - lo.round()).abs() > 1e-9 || lo.round() < 1.0 || self.nodes_per_cutoff < lo.round() as usize + 2 {
            return Err(AdaptiveError::Settings(format!(
                "ell * nodes_per_cutoff = {lo} must be a positive integer at least two below nodes_per_cutoff"
            )));
        }
        if let Some(xi) = self.xi {
            if !(xi > 1.0 && xi.is_finite()) {
                return Err(AdaptiveError::Settings(format!("xi = {xi} must exceed 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.max_clipped_fraction) {
            return Err(AdaptiveError::Settings("max_clipped_fraction must lie in [0, 1]".into()));
        }
        self.levels.validate()?;
        Ok(())
    }
}

/// Grid for cut-off `U`: step `U / nodes_per_cutoff`, reaching `2U` (or `2 xi U`)
/// so that the covariance kernel can look up `phi(u + v)` on the whole support.
pub fn rung_grid(cutoff: f64, settings: &EstimatorSettings) -> Result<FreqGrid, AdaptiveError> {
    let reach = 2.0 * settings.xi.unwrap_or(1.0).max(1.0);
    let intervals = (reach * settings.nodes_per_cutoff as f64).ceil() as usize;
    Ok(FreqGrid::new(cutoff / settings.nodes_per_cutoff as f64, intervals + 1)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RungEstimate {
    pub cutoff: f64,
    pub alpha: f64,
    /// Plug-in variance of `alpha` itself, i.e. `eps` times the normalized variance.
    pub sigma2: f64,
    pub clipped_fraction: f64,
    pub admissible: bool,
}

impl RungEstimate {
    fn inadmissible(cutoff: f64) -> Self {
        RungEstimate { cutoff, alpha: f64::NAN, sigma2: f64::NAN, clipped_fraction: 1.0, admissible: false }
    }
}

/// Estimate and variance from a cf estimate on [`rung_grid`].
pub fn estimate_rung(
    cf: &CfEstimate,
    cutoff: f64,
    settings: &EstimatorSettings,
) -> Result<RungEstimate, AdaptiveError> {
    let w = build_weight(cutoff, settings.ell)?;
    let (curve, lf_var) = match settings.xi {
        None => {
            let curve = y_curve(cf, &settings.levels)?;
            let v = variance_sigma(cf, &w, &settings.levels, settings.kernel, settings.variance_mode)?;
            (curve, v.sigma2)
        }
        Some(xi) => {
            let curve = xi_curve(cf, xi, &settings.levels)?;
            let lf = xi_functional(cf, xi, &w, &settings.levels)?;
            let v = linear_variance(cf, &lf, settings.kernel, cf.eps)?;
            (curve, v.sigma2)
        }
    };
    let alpha = estimate_alpha(&curve, &w)?;
    let lo = (settings.ell * settings.nodes_per_cutoff as f64).round() as usize;
    let hi = settings.nodes_per_cutoff;
    let clipped = curve.clipped[lo..=hi].iter().filter(|c| **c).count();
    let clipped_fraction = clipped as f64 / (hi - lo + 1) as f64;
    let sigma2 = cf.eps * lf_var;
    let admissible =
        clipped_fraction <= settings.max_clipped_fraction && sigma2 > 0.0 && sigma2.is_finite() && alpha.is_finite();
    Ok(RungEstimate { cutoff, alpha, sigma2, clipped_fraction, admissible })
}

/// Runs [`estimate_rung`] down the ladder. `cf_for` returns `None` when no
/// usable cf estimate exists on a rung's grid; that rung is then inadmissible.
pub fn estimate_ladder<F>(
    ladder: &CutoffLadder,
    settings: &EstimatorSettings,
    mut cf_for: F,
) -> Result<Vec<RungEstimate>, AdaptiveError>
where
    F: FnMut(FreqGrid) -> Result<Option<CfEstimate>, AdaptiveError>,
{
    settings.validate()?;
    ladder
        .cutoffs()
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let grid = rung_grid(u, settings)?;
            match cf_for(grid)? {
                None => Ok(RungEstimate::inadmissible(u)),
                Some(cf) => estimate_rung(&cf, u, settings).map_err(|e| match e {
                    AdaptiveError::Spectral(source) => AdaptiveError::Rung { rung: k + 1, cutoff: u, source },
                    other => other,
                }),
            }
        })
        .collect()
}
