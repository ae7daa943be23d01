use serde::{Deserialize, Serialize};

use super::truncation::TruncationLevels;
use super::weight::{DiscreteWeight, WeightSpec};
use super::SpectralError;
use crate::ecf::{cov_kernel_projection, cov_kernel_s, finite_n_cov_from, CfEstimate, CfSource};

/// Covariance kernel used for `Delta(u) = |phi~(u)|^2 - |phi(u)|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// The `Re/Im` kernel in its literal form.
    Printed,
    /// Limit covariance of `eps^{-1/2} Delta`.
    #[default]
    Projection,
    /// Exact finite-sample covariance divided by `eps`.
    FiniteN,
}

/// How `zeta_1` enters the plug-in variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// `zeta~_1` at every node.
    #[default]
    Pointwise,
    /// `zeta~_1` replaced by its largest magnitude over the support.
    Envelope,
}

/// `sum_j a_j Delta(f_j)`: first-order expansion of an estimator in `Delta`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearFunctional {
    pub terms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceResult {
    /// `sigma^2` with `Var(alpha~) ~ eps sigma^2`.
    pub sigma2: f64,
    /// True when a negative quadrature value had to be clipped to zero.
    pub clipped: bool,
}

fn kernel_value(src: &impl CfSource, kind: KernelKind, eps: f64, u: f64, v: f64) -> Result<f64, SpectralError> {
    Ok(match kind {
        KernelKind::Printed => cov_kernel_s(src, u, v)?,
        KernelKind::Projection => cov_kernel_projection(src, u, v)?,
        KernelKind::FiniteN => finite_n_cov_from(src, u, v, eps)? / eps,
    })
}

/// `sum_i sum_j a_i a_j K(f_i, f_j)` for an arbitrary kernel.
pub fn linear_variance_with<K>(lf: &LinearFunctional, kernel: K) -> Result<VarianceResult, SpectralError>
where
    K: Fn(f64, f64) -> Result<f64, SpectralError>,
{
    let mut total = 0.0;
    let mut scale = 0.0;
    for (i, &(fi, ai)) in lf.terms.iter().enumerate() {
        // symmetric kernel: diagonal once, off-diagonal twice
        let kd = kernel(fi, fi)?;
        total += ai * ai * kd;
        scale += (ai * ai * kd).abs();
        for &(fj, aj) in &lf.terms[i + 1..] {
            let k = 0.5 * (kernel(fi, fj)? + kernel(fj, fi)?);
            total += 2.0 * ai * aj * k;
            scale += 2.0 * (ai * aj * k).abs();
        }
    }
    if total < 0.0 {
        if total < -1e-12 * scale.max(1e-300) {
            log::debug!("variance quadrature negative ({total:e}); clipped to zero");
        }
        return Ok(VarianceResult { sigma2: 0.0, clipped: true });
    }
    Ok(VarianceResult { sigma2: total, clipped: false })
}

pub fn linear_variance(
    src: &impl CfSource,
    lf: &LinearFunctional,
    kind: KernelKind,
    eps: f64,
) -> Result<VarianceResult, SpectralError> {
    linear_variance_with(lf, |u, v| kernel_value(src, kind, eps, u, v))
}

/// First-order expansion `alpha~ - alpha ~ sum_k q_k zeta_1(u_k) Delta(u_k)` with
/// `zeta_1` from the clamped plug-in modulus.
pub fn alpha_functional(
    cf: &CfEstimate,
    w: &WeightSpec,
    levels: &TruncationLevels,
    mode: VarianceMode,
) -> Result<LinearFunctional, SpectralError> {
    let dw = DiscreteWeight::new(w, cf.grid)?;
    let zeta: Vec<f64> = dw
        .nodes()
        .map(|k| {
            let (lo, hi) = levels.at(k);
            let s = cf.values[k].norm_sqr().clamp(lo, hi);
            1.0 / (s * s.ln())
        })
        .collect();
    let envelope = zeta.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let terms = dw
        .nodes()
        .zip(&dw.q)
        .zip(&zeta)
        .map(|((k, q), z)| {
            let z = match mode {
                VarianceMode::Pointwise => *z,
                VarianceMode::Envelope => -envelope,
            };
            (cf.grid.u(k), q * z)
        })
        .collect();
    Ok(LinearFunctional { terms })
}

/// Plug-in `sigma^2` of `alpha~_U`: kernel and `zeta_1` both from the estimate itself.
pub fn variance_sigma(
    cf: &CfEstimate,
    w: &WeightSpec,
    levels: &TruncationLevels,
    kind: KernelKind,
    mode: VarianceMode,
) -> Result<VarianceResult, SpectralError> {
    let lf = alpha_functional(cf, w, levels, mode)?;
    linear_variance(cf, &lf, kind, cf.eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecf::{FreqGrid, Measure};
    use crate::levy_models::ModelSpec;

    #[test]
    fn zero_kernel_gives_zero() {
        let lf = LinearFunctional { terms: vec![(1.0, 2.0), (2.0, -1.0)] };
        let r = linear_variance_with(&lf, |_, _| Ok(0.0)).unwrap();
        assert_eq!(r.sigma2, 0.0);
    }

    #[test]
    fn normalized_variance_scales_with_eps() {
        let m = ModelSpec::stable(1.0, 1.0);
        let grid = FreqGrid::covering(4.0, 80).unwrap();
        let w = crate::spectral::build_weight(2.0, 0.1).unwrap();
        let l = TruncationLevels::default();
        let a = CfEstimate::from_model(&m, 1.0, grid, 1e-4, Measure::P).unwrap();
        let b = CfEstimate { eps: 2e-4, ..a.clone() };
        let sa = variance_sigma(&a, &w, &l, KernelKind::Projection, VarianceMode::Pointwise).unwrap().sigma2;
        let sb = variance_sigma(&b, &w, &l, KernelKind::Projection, VarianceMode::Pointwise).unwrap().sigma2;
        assert!(sa > 0.0);
        assert!((2e-4 * sb / (1e-4 * sa) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn finite_n_kernel_tends_to_projection() {
        let m = ModelSpec::stable(1.0, 1.5);
        let grid = FreqGrid::covering(4.0, 80).unwrap();
        let w = crate::spectral::build_weight(2.0, 0.1).unwrap();
        let l = TruncationLevels::default();
        let cf = CfEstimate::from_model(&m, 1.0, grid, 1e-7, Measure::P).unwrap();
        let a = variance_sigma(&cf, &w, &l, KernelKind::FiniteN, VarianceMode::Pointwise).unwrap().sigma2;
        let b = variance_sigma(&cf, &w, &l, KernelKind::Projection, VarianceMode::Pointwise).unwrap().sigma2;
        assert!((a / b - 1.0).abs() < 1e-5);
    }
}
