use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::ecf::{CfEstimate, FreqGrid, Measure};
use crate::option_market::{noise_level, OptionQuoteSet};

/// Largest admissible argument change between neighbouring nodes.
const MAX_PHASE_STEP: f64 = 0.9 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("1 - v(v+i)F vanishes near v = {0}")]
    NearZero(f64),
    #[error("phase jumps by {jump:.3} between v = {from} and the next node; grid too coarse")]
    BranchAmbiguity { from: f64, jump: f64 },
    #[error("transform and grid lengths differ")]
    Length,
    #[error("quotes must be exponentially weighted first")]
    Unweighted,
}

/// `psi~(v) = T^{-1} log phi~(v)` on a nonnegative grid, continuous from `psi~(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentCurve {
    pub grid: FreqGrid,
    pub values: Vec<Complex64>,
    pub maturity: f64,
}

/// `phi~(v) = 1 - v (v + i) F[O](v + i)`.
pub fn cf_from_transform(f_vals: &[Complex64], grid: FreqGrid) -> Result<Vec<Complex64>, ExponentError> {
    if f_vals.len() != grid.len {
        return Err(ExponentError::Length);
    }
    Ok(f_vals
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let v = grid.u(k);
            Complex64::new(1.0, 0.0) - v * Complex64::new(v, 1.0) * f
        })
        .collect())
}

/// Unwinds `log(1 - v(v+i)F)` outward from `v = 0`.
pub fn exponent_from_transform(
    f_vals: &[Complex64],
    grid: FreqGrid,
    maturity: f64,
) -> Result<ExponentCurve, ExponentError> {
    let phi = cf_from_transform(f_vals, grid)?;
    let mut values = Vec::with_capacity(phi.len());
    let mut prev_arg = 0.0;
    for (k, p) in phi.iter().enumerate() {
        let r = p.norm();
        if !(r > 1e-12) {
            return Err(ExponentError::NearZero(grid.u(k)));
        }
        let principal = p.arg();
        let arg = if k == 0 {
            principal
        } else {
            let jump = (principal - prev_arg).rem_euclid(2.0 * PI);
            let jump = if jump > PI { jump - 2.0 * PI } else { jump };
            if jump.abs() > MAX_PHASE_STEP {
                return Err(ExponentError::BranchAmbiguity { from: grid.u(k - 1), jump });
            }
            prev_arg + jump
        };
        prev_arg = arg;
        values.push(Complex64::new(r.ln(), arg) / maturity);
    }
    Ok(ExponentCurve { grid, values, maturity })
}

/// `exp(T psi~)` as a cf estimate under the pricing measure.
pub fn cf_from_exponent(curve: &ExponentCurve, eps: f64) -> CfEstimate {
    CfEstimate {
        grid: curve.grid,
        values: curve.values.iter().map(|p| (curve.maturity * p).exp()).collect(),
        eps,
        measure: Measure::Q,
    }
}

/// Riemann-sum estimator `1 - u(u+i) sum_j delta_j O~(y_j) e^{i u y_j}` on weighted quotes.
pub fn direct_cf_q(quotes: &OptionQuoteSet, grid: FreqGrid) -> Result<CfEstimate, ExponentError> {
    if !quotes.weighted {
        return Err(ExponentError::Unweighted);
    }
    let mut sums = vec![Complex64::new(0.0, 0.0); grid.len];
    for ((y, o), d) in quotes.y.iter().zip(&quotes.noisy).zip(&quotes.deltas) {
        let step = Complex64::from_polar(1.0, grid.step * y);
        let mut rot = Complex64::new(d * o, 0.0);
        for (k, s) in sums.iter_mut().enumerate() {
            if k % 128 == 0 {
                rot = Complex64::from_polar(d * o, grid.u(k) * y);
            }
            *s += rot;
            rot *= step;
        }
    }
    let values = sums
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let u = grid.u(k);
            Complex64::new(1.0, 0.0) - u * Complex64::new(u, 1.0) * s
        })
        .collect();
    Ok(CfEstimate { grid, values, eps: noise_level(quotes), measure: Measure::Q })
}

impl ExponentCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("v,re_psi,im_psi\n");
        for (k, p) in self.values.iter().enumerate() {
            s.push_str(&format!("{:e},{:e},{:e}\n", self.grid.u(k), p.re, p.im));
        }
        s
    }
}
