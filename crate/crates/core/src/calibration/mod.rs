//! Recovering the risk-neutral characteristic function from option quotes.
//!
//! Two routes are available: the direct Riemann sum over the quotes and the
//! smoothing-spline route (fit, transform, logarithm).

pub mod exponent;
pub mod fourier;
pub mod spline;

pub use exponent::{
    cf_from_exponent, cf_from_transform, direct_cf_q, exponent_from_transform, ExponentCurve, ExponentError,
};
pub use fourier::{fourier_of_fit, fourier_of_fit_damped};
pub use spline::{gcv_scan, gcv_select, objective, spline_fit, Penalty, SplineError, SplineFit};

use crate::ecf::{CfEstimate, FreqGrid, Measure};
use crate::option_market::{exp_weight, noise_level, OptionQuoteSet};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
}

/// Which estimator of the pricing-measure cf to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QRoute {
    #[default]
    Spline,
    Direct,
}

/// GCV smoothing spline through the exponentially weighted quotes
/// `e^{-y} O~(y)`, pinned to zero a fixed distance outside the design.
pub fn fit_weighted_quotes(quotes: &OptionQuoteSet) -> Result<SplineFit, CalibrationError> {
    let w = if quotes.weighted { quotes.clone() } else { exp_weight(quotes) };
    Ok(spline_fit(&w.y, &w.noisy, Penalty::Gcv, true)?)
}

/// `phi~(v) = 1 - v(v+i) int e^{ivy} S(y) dy` for a fit `S` of the weighted quotes.
pub fn cf_from_fit(fit: &SplineFit, grid: FreqGrid, eps: f64) -> Result<CfEstimate, CalibrationError> {
    let f = fourier_of_fit_damped(fit, &grid.nodes(), 0.0);
    let values = cf_from_transform(&f, grid)?;
    Ok(CfEstimate { grid, values, eps, measure: Measure::Q })
}

/// Spline route end to end: fit, exact transform, unwound exponent, and the
/// cf estimate carrying the quote-set noise level.
pub fn spline_route(
    quotes: &OptionQuoteSet,
    grid: FreqGrid,
    maturity: f64,
) -> Result<(CfEstimate, SplineFit, ExponentCurve), CalibrationError> {
    let fit = fit_weighted_quotes(quotes)?;
    let f = fourier_of_fit_damped(&fit, &grid.nodes(), 0.0);
    let curve = exponent_from_transform(&f, grid, maturity)?;
    let eps = quote_noise_level(quotes);
    Ok((cf_from_exponent(&curve, eps), fit, curve))
}

/// Noise level of a quote set, weighted or not.
pub fn quote_noise_level(quotes: &OptionQuoteSet) -> f64 {
    if quotes.weighted {
        noise_level(quotes)
    } else {
        noise_level(&exp_weight(quotes))
    }
}

/// Either route, returning just the cf estimate (no logarithm is taken).
pub fn estimate_cf_q(quotes: &OptionQuoteSet, grid: FreqGrid, route: QRoute) -> Result<CfEstimate, CalibrationError> {
    match route {
        QRoute::Spline => cf_from_fit(&fit_weighted_quotes(quotes)?, grid, quote_noise_level(quotes)),
        QRoute::Direct => {
            let w = if quotes.weighted { quotes.clone() } else { exp_weight(quotes) };
            Ok(direct_cf_q(&w, grid)?)
        }
    }
}
