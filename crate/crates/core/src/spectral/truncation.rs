use serde::{Deserialize, Serialize};

use super::SpectralError;
use crate::ecf::{CfEstimate, FreqGrid};

/// Clamp levels for `|phi~|^2`, constant or given per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruncationLevels {
    Constant { omega_minus: f64, omega_plus: f64 },
    PerNode { omega_minus: Vec<f64>, omega_plus: Vec<f64> },
}

impl Default for TruncationLevels {
    fn default() -> Self {
        TruncationLevels::Constant { omega_minus: 0.01, omega_plus: 0.95 }
    }
}

impl TruncationLevels {
    pub fn constant(omega_minus: f64, omega_plus: f64) -> Result<Self, SpectralError> {
        let l = TruncationLevels::Constant { omega_minus, omega_plus };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let ok = |a: f64, b: f64| a > 0.0 && a <= b && b < 1.0;
        let good = match self {
            TruncationLevels::Constant { omega_minus, omega_plus } => ok(*omega_minus, *omega_plus),
            TruncationLevels::PerNode { omega_minus, omega_plus } => {
                omega_minus.len() == omega_plus.len() && omega_minus.iter().zip(omega_plus).all(|(a, b)| ok(*a, *b))
            }
        };
        if good {
            Ok(())
        } else {
            Err(SpectralError::Levels(format!("{self:?}")))
        }
    }

    /// Levels at node `k`.
    pub fn at(&self, k: usize) -> (f64, f64) {
        match self {
            TruncationLevels::Constant { omega_minus, omega_plus } => (*omega_minus, *omega_plus),
            TruncationLevels::PerNode { omega_minus, omega_plus } => (omega_minus[k], omega_plus[k]),
        }
    }

    fn covers(&self, len: usize) -> bool {
        match self {
            TruncationLevels::Constant { .. } => true,
            TruncationLevels::PerNode { omega_minus, .. } => omega_minus.len() >= len,
        }
    }
}

/// Pointwise clamp of `values[k]` into the levels at node `k`.
pub fn truncate(values: &[f64], levels: &TruncationLevels) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (lo, hi) = levels.at(k);
            v.clamp(lo, hi)
        })
        .collect()
}

/// `omega_{+-}^* = s (1 +- x / (1 + x))` with `s = |phi|^2`, `x = -log s`.
pub fn oracle_levels(mod2: &[f64]) -> Result<TruncationLevels, SpectralError> {
    let mut lo = Vec::with_capacity(mod2.len());
    let mut hi = Vec::with_capacity(mod2.len());
    for (k, &s) in mod2.iter().enumerate() {
        if !(s > 0.0 && s < 1.0) {
            return Err(SpectralError::Domain { u: k as f64, value: s });
        }
        let x = -s.ln();
        let r = x / (1.0 + x);
        lo.push(s * (1.0 - r));
        hi.push(s * (1.0 + r));
    }
    Ok(TruncationLevels::PerNode { omega_minus: lo, omega_plus: hi })
}

/// Levels built from prior bounds on the class:
/// `omega_-(u) = c1 exp(-2 eta_plus t u^alpha_bar) u^{-alpha_bar}` and
/// `omega_+(u) = c2 exp(-2 eta_minus t u^alpha_low)`, each clipped into `(0, 1)`.
#[allow(clippy::too_many_arguments)]
pub fn prior_levels(
    grid: FreqGrid,
    t: f64,
    c1: f64,
    c2: f64,
    eta_minus: f64,
    eta_plus: f64,
    alpha_low: f64,
    alpha_bar: f64,
) -> TruncationLevels {
    let tiny = 1e-300;
    let cap = 1.0 - 1e-12;
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..grid.len)
        .map(|k| {
            let u = grid.u(k).max(grid.step * 1e-3);
            let hi = (c2 * (-2.0 * eta_minus * t * u.powf(alpha_low)).exp()).clamp(tiny, cap);
            let lo = (c1 * (-2.0 * eta_plus * t * u.powf(alpha_bar)).exp() * u.powf(-alpha_bar)).clamp(tiny, hi);
            (lo, hi)
        })
        .unzip();
    TruncationLevels::PerNode { omega_minus: lo, omega_plus: hi }
}

fn check_unit(s: f64, u: f64) -> Result<(), SpectralError> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(SpectralError::Domain { u, value: s })
    }
}

/// `zeta_1 = 1 / (s log s)` and `zeta_2 = 2 max_{xi in {omega_-, omega_+}} (1 + |log xi|) / (xi^2 log^2 xi)`.
pub fn zeta_coefficients(mod2: &[f64], levels: &TruncationLevels) -> Result<(Vec<f64>, Vec<f64>), SpectralError> {
    let mut z1 = Vec::with_capacity(mod2.len());
    let mut z2 = Vec::with_capacity(mod2.len());
    for (k, &s) in mod2.iter().enumerate() {
        check_unit(s, k as f64)?;
        z1.push(1.0 / (s * s.ln()));
        let (lo, hi) = levels.at(k);
        let b = |x: f64| (1.0 + x.ln().abs()) / (x * x * x.ln().powi(2));
        z2.push(2.0 * b(lo).max(b(hi)));
    }
    Ok((z1, z2))
}

/// `Y~(u) = log(-log T[|phi~|^2](u))` on every grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCurve {
    pub grid: FreqGrid,
    pub values: Vec<f64>,
    pub clipped: Vec<bool>,
    pub levels: TruncationLevels,
}

impl SpectralCurve {
    /// Builds the curve from any `(0, inf)`-valued input such as `|phi~|^2` or a ratio.
    pub fn from_mod2(grid: FreqGrid, mod2: &[f64], levels: &TruncationLevels) -> Result<Self, SpectralError> {
        levels.validate()?;
        if !levels.covers(mod2.len()) {
            return Err(SpectralError::Coverage { what: "per-node levels".into() });
        }
        let t = truncate(mod2, levels);
        let values = t.iter().map(|s| (-s.ln()).ln()).collect();
        let clipped = mod2.iter().zip(&t).map(|(a, b)| a != b).collect();
        Ok(SpectralCurve { grid, values, clipped, levels: levels.clone() })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,y,clipped\n");
        for (k, (y, c)) in self.values.iter().zip(&self.clipped).enumerate() {
            s.push_str(&format!("{:e},{:e},{}\n", self.grid.u(k), y, u8::from(*c)));
        }
        s
    }
}

pub fn y_curve(cf: &CfEstimate, levels: &TruncationLevels) -> Result<SpectralCurve, SpectralError> {
    let mod2: Vec<f64> = cf.values.iter().map(|v| v.norm_sqr()).collect();
    SpectralCurve::from_mod2(cf.grid, &mod2, levels)
}

/// Per-node check of `|Q(u)| <= zeta_2(u) Delta(u)^2` for `Q = Y~ - Y - zeta_1 Delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationReport {
    /// `max_k (|Q| - zeta_2 Delta^2)`; nonpositive when the bound holds everywhere.
    pub worst_excess: f64,
    pub violations: usize,
    pub nodes: usize,
}

/// Nodes with `|phi|^2` outside `(0, 1)` (the origin) are skipped. A rounding
/// allowance of a few ulps of the terms involved is granted.
pub fn linearization_residual(
    cf: &CfEstimate,
    exact_mod2: &[f64],
    levels: &TruncationLevels,
) -> Result<LinearizationReport, SpectralError> {
    let used: Vec<usize> = (0..cf.grid.len).filter(|&k| exact_mod2[k] > 0.0 && exact_mod2[k] < 1.0).collect();
    let s: Vec<f64> = used.iter().map(|&k| exact_mod2[k]).collect();
    let star = oracle_levels(&s)?;
    let sub_levels = TruncationLevels::PerNode {
        omega_minus: used.iter().map(|&k| levels.at(k).0).collect(),
        omega_plus: used.iter().map(|&k| levels.at(k).1).collect(),
    };
    for (j, &k) in used.iter().enumerate() {
        let (lo, hi) = sub_levels.at(j);
        let (slo, shi) = star.at(j);
        if !(lo > 0.0 && lo <= slo * (1.0 + 1e-12) && shi <= hi * (1.0 + 1e-12) && hi < 1.0) {
            return Err(SpectralError::Bracketing { u: cf.grid.u(k) });
        }
    }
    let (z1, z2) = zeta_coefficients(&s, &sub_levels)?;
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for (j, &k) in used.iter().enumerate() {
        let (lo, hi) = sub_levels.at(j);
        let est = cf.values[k].norm_sqr();
        let delta = est - s[j];
        let y_tilde = (-est.clamp(lo, hi).ln()).ln();
        let y_true = (-s[j].ln()).ln();
        let lin = z1[j] * delta;
        let q = y_tilde - y_true - lin;
        let slack = 64.0 * f64::EPSILON * (y_tilde.abs() + y_true.abs() + lin.abs());
        let excess = q.abs() - z2[j] * delta * delta - slack;
        worst = worst.max(excess);
        if excess > 0.0 {
            violations += 1;
        }
    }
    Ok(LinearizationReport { worst_excess: worst, violations, nodes: used.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecf::{empirical_cf, Measure};
    use crate::levy_models::{sample_increments, ModelSpec};

    #[test]
    fn clamp_examples() {
        let l = TruncationLevels::default();
        assert_eq!(truncate(&[0.5, 1.2, 1e-5], &l), vec![0.5, 0.95, 0.01]);
    }

    #[test]
    fn oracle_levels_substitution_and_pinch() {
        let s = (-2.0f64).exp();
        let TruncationLevels::PerNode { omega_minus, omega_plus } = oracle_levels(&[s, 1.0 - 1e-12]).unwrap() else {
            unreachable!()
        };
        assert!((omega_minus[0] - s * (1.0 - 2.0 / 3.0)).abs() < 1e-16);
        assert!((omega_plus[0] - s * (1.0 + 2.0 / 3.0)).abs() < 1e-16);
        assert!((omega_plus[1] - omega_minus[1]).abs() < 1e-11);
        assert!(oracle_levels(&[1.0]).is_err() && oracle_levels(&[0.0]).is_err());
    }

    #[test]
    fn oracle_levels_bracket_the_modulus() {
        let m = ModelSpec::stable(1.0, 1.3);
        let s: Vec<f64> = (1..200).map(|k| m.cf_at(1.0, 0.02 * k as f64).unwrap().norm_sqr()).collect();
        let l = oracle_levels(&s).unwrap();
        for (k, v) in s.iter().enumerate() {
            let (a, b) = l.at(k);
            assert!(a <= *v && *v <= b);
        }
    }

    #[test]
    fn zeta_values() {
        let s = (-2.0f64).exp();
        let l = TruncationLevels::default();
        let (z1, z2) = zeta_coefficients(&[s], &l).unwrap();
        assert!((z1[0] + 2f64.exp() / 2.0).abs() < 1e-12);
        // plug-in form 1 / (|phi|^2 log |phi|^2) equals 1 / (2 |phi|^2 log |phi|)
        let p = s.sqrt();
        assert!((z1[0] - 1.0 / (2.0 * p * p * p.ln())).abs() < 1e-12);
        let b = |x: f64| (1.0 + x.ln().abs()) / (x * x * x.ln().powi(2));
        assert_eq!(z2[0], 2.0 * b(0.01).max(b(0.95)));
    }

    #[test]
    fn stable_curve_is_affine_in_log_u() {
        let m = ModelSpec::stable(0.5, 1.4);
        let grid = FreqGrid::covering(2.0, 40).unwrap();
        let cf = CfEstimate::from_model(&m, 1.0, grid, 1e-4, Measure::P).unwrap();
        let c = y_curve(&cf, &TruncationLevels::constant(1e-6, 0.999).unwrap()).unwrap();
        for k in 5..grid.len {
            let u = grid.u(k);
            assert!((c.values[k] - (1.4 * u.ln())).abs() < 1e-12);
        }
        assert!((c.values[20]).abs() < 1e-12);
    }

    #[test]
    fn gh_curve_approaches_its_linear_asymptote() {
        let m = ModelSpec::gh(1.0, 0.0, 1.0, 1.0);
        let grid = FreqGrid::covering(400.0, 400).unwrap();
        let cf = CfEstimate::from_model(&m, 0.01, grid, 1e-4, Measure::P).unwrap();
        let c = y_curve(&cf, &TruncationLevels::constant(1e-12, 1.0 - 1e-12).unwrap()).unwrap();
        let gap = |k: usize| (c.values[k] - (2.0 * 0.01 * grid.u(k)).ln()).abs();
        assert!(gap(400) < gap(100) && gap(100) < gap(25) && gap(400) < 0.03);
    }

    #[test]
    fn linearization_exact_data_and_bracketing() {
        let m = ModelSpec::stable(1.0, 1.0);
        let grid = FreqGrid::covering(3.0, 30).unwrap();
        let cf = CfEstimate::from_model(&m, 1.0, grid, 1e-3, Measure::P).unwrap();
        let s: Vec<f64> = cf.values.iter().map(|v| v.norm_sqr()).collect();
        let levels = oracle_levels(&s[1..].iter().copied().chain(std::iter::once(0.5)).collect::<Vec<_>>()).unwrap();
        // levels computed for shifted data do not bracket the true oracle levels
        assert!(matches!(linearization_residual(&cf, &s, &levels), Err(SpectralError::Bracketing { .. })));
        let mut own = vec![0.5];
        own.extend_from_slice(&s[1..]);
        let r = linearization_residual(&cf, &s, &oracle_levels(&own).unwrap()).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.worst_excess <= 0.0);
    }

    #[test]
    fn linearization_holds_on_simulated_data() {
        let m = ModelSpec::stable(1.0, 1.2);
        let grid = FreqGrid::covering(3.0, 60).unwrap();
        let mut s: Vec<f64> = (0..grid.len).map(|k| m.cf_at(1.0, grid.u(k)).unwrap().norm_sqr()).collect();
        s[0] = 0.5;
        let levels = oracle_levels(&s).unwrap();
        s[0] = 1.0;
        for seed in 0..20 {
            let cf = empirical_cf(&sample_increments(&m, 1.0, 1000, seed).unwrap(), grid);
            let r = linearization_residual(&cf, &s, &levels).unwrap();
            assert_eq!(r.violations, 0, "seed {seed}: {r:?}");
        }
    }
}
