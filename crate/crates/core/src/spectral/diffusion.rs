//! Diffusion-robust variant: the ratio `rho_xi(u) = |phi(u)|^{2 xi^2} / |phi(xi u)|^2`
//! cancels any Gaussian part, leaving `log rho_xi(u) = -2 c_xi(alpha) u^alpha`
//! with `c_xi(alpha) = eta (xi^2 - xi^alpha)` for stable jumps.

use super::truncation::{SpectralCurve, TruncationLevels};
use super::variance::LinearFunctional;
use super::weight::{DiscreteWeight, WeightSpec};
use super::SpectralError;
use crate::ecf::{CfEstimate, FreqGrid};

/// Number of leading nodes `k` whose partner `xi u_k` still lies on the grid.
fn usable_nodes(grid: FreqGrid, xi: f64) -> usize {
    let mut n = 0;
    while n < grid.len && grid.index_of(xi * grid.u(n)).is_ok() {
        n += 1;
    }
    n
}

/// `rho~_xi` at the first nodes of the estimate's grid (partners snapped to the nearest node).
pub fn rho_xi(cf: &CfEstimate, xi: f64) -> Result<Vec<f64>, SpectralError> {
    if !(xi > 1.0) {
        return Err(SpectralError::Coverage { what: format!("ratio xi = {xi} must exceed 1") });
    }
    let n = usable_nodes(cf.grid, xi);
    (0..n)
        .map(|k| {
            let den = cf.values[cf.grid.index_of(xi * cf.grid.u(k))?].norm_sqr();
            if !(den > 0.0) {
                return Err(SpectralError::VanishingDenominator { u: cf.grid.u(k) });
            }
            Ok(cf.values[k].norm_sqr().powf(xi * xi) / den)
        })
        .collect()
}

/// `Y~_xi(u) = log(-log T[rho~_xi](u))`.
pub fn xi_curve(cf: &CfEstimate, xi: f64, levels: &TruncationLevels) -> Result<SpectralCurve, SpectralError> {
    let rho = rho_xi(cf, xi)?;
    let grid = FreqGrid::new(cf.grid.step, rho.len())?;
    SpectralCurve::from_mod2(grid, &rho, levels)
}

pub fn estimate_alpha_xi(
    cf: &CfEstimate,
    xi: f64,
    levels: &TruncationLevels,
    w: &WeightSpec,
) -> Result<f64, SpectralError> {
    let curve = xi_curve(cf, xi, levels)?;
    Ok(DiscreteWeight::new(w, curve.grid)?.apply(&curve.values))
}

/// Linearization of `alpha~_xi` in `Delta` at `u_k` and `xi u_k`.
pub fn xi_functional(
    cf: &CfEstimate,
    xi: f64,
    w: &WeightSpec,
    levels: &TruncationLevels,
) -> Result<LinearFunctional, SpectralError> {
    let rho = rho_xi(cf, xi)?;
    let grid = FreqGrid::new(cf.grid.step, rho.len())?;
    let dw = DiscreteWeight::new(w, grid)?;
    let floor = 1e-300;
    let mut terms = Vec::with_capacity(2 * dw.q.len());
    for (k, q) in dw.nodes().zip(&dw.q) {
        let (lo, hi) = levels.at(k);
        let log_rho = rho[k].clamp(lo, hi).ln();
        let u = grid.u(k);
        let su = cf.values[k].norm_sqr().max(floor);
        let partner = cf.grid.index_of(xi * u)?;
        let sx = cf.values[partner].norm_sqr().max(floor);
        terms.push((u, q * xi * xi / (su * log_rho)));
        terms.push((cf.grid.u(partner), -q / (sx * log_rho)));
    }
    Ok(LinearFunctional { terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecf::Measure;
    use crate::levy_models::ModelSpec;
    use crate::spectral::{build_weight, estimate_alpha, y_curve};

    fn wide() -> TruncationLevels {
        TruncationLevels::constant(1e-300, 1.0 - 1e-15).unwrap()
    }

    #[test]
    fn pure_diffusion_cancels() {
        let m = ModelSpec::stable(0.3, 2.0);
        let grid = FreqGrid::covering(6.0, 120).unwrap();
        let cf = CfEstimate::from_model(&m, 1.0, grid, 1e-3, Measure::P).unwrap();
        for r in rho_xi(&cf, 2.0).unwrap() {
            assert!(r.ln().abs() < 1e-12);
        }
    }

    #[test]
    fn stable_ratio_algebra() {
        let m = ModelSpec::stable(1.0, 1.0);
        let grid = FreqGrid::covering(6.0, 120).unwrap();
        let cf = CfEstimate::from_model(&m, 1.0, grid, 1e-3, Measure::P).unwrap();
        for (k, r) in rho_xi(&cf, 2.0).unwrap().iter().enumerate() {
            // half the log ratio is -c_xi(alpha) u with c = eta (xi^2 - xi) = 2
            assert!((0.5 * r.ln() + 2.0 * grid.u(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn stable_plus_diffusion_ratio_and_estimate() {
        let (eta, alpha, a, xi) = (1.0, 1.0, 0.1, 2.0);
        let m = ModelSpec::stable_plus_diffusion(eta, alpha, a);
        let grid = FreqGrid::covering(10.0, 80).unwrap();
        let cf = CfEstimate::from_model(&m, 1.0, grid, 1e-3, Measure::P).unwrap();
        let c = eta * (xi * xi - f64::powf(xi, alpha));
        for (k, r) in rho_xi(&cf, xi).unwrap().iter().enumerate() {
            assert!((0.5 * r.ln() + c * grid.u(k).powf(alpha)).abs() < 1e-10);
        }
        let w = build_weight(5.0, 0.1).unwrap();
        assert!((estimate_alpha_xi(&cf, xi, &wide(), &w).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn agrees_with_plain_estimator_without_diffusion() {
        let m = ModelSpec::stable(0.7, 1.3);
        let grid = FreqGrid::covering(8.0, 80).unwrap();
        let cf = CfEstimate::from_model(&m, 1.0, grid, 1e-3, Measure::P).unwrap();
        let w = build_weight(4.0, 0.1).unwrap();
        let plain = estimate_alpha(&y_curve(&cf, &wide()).unwrap(), &w).unwrap();
        let ratio = estimate_alpha_xi(&cf, 2.0, &wide(), &w).unwrap();
        assert!((plain - ratio).abs() < 1e-9);
    }

    #[test]
    fn vanishing_denominator() {
        let grid = FreqGrid::new(1.0, 5).unwrap();
        let mut cf = CfEstimate::from_model(&ModelSpec::stable(0.1, 1.0), 1.0, grid, 1e-3, Measure::P).unwrap();
        cf.values[4] = num_complex::Complex64::new(0.0, 0.0);
        assert!(matches!(rho_xi(&cf, 2.0), Err(SpectralError::VanishingDenominator { .. })));
    }
}
