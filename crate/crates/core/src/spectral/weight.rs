use serde::{Deserialize, Serialize};

use super::truncation::SpectralCurve;
use super::SpectralError;
use crate::ecf::FreqGrid;
use crate::levy_models::ModelSpec;

/// `w^1(u) = u (A1 log u - A2)` on `[ell, 1]`, rescaled to `w^U(u) = U^{-1} w^1(u / U)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub cutoff: f64,
    pub ell: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Moments `int_ell^1 u log^j u du` for `j = 0, 1, 2`.
fn moments(ell: f64) -> [f64; 3] {
    let l2 = ell * ell;
    let lg = ell.ln();
    [0.5 * (1.0 - l2), -0.25 - (0.5 * l2 * lg - 0.25 * l2), 0.25 - (0.5 * l2 * lg * lg - 0.5 * l2 * lg + 0.25 * l2)]
}

pub fn build_weight(cutoff: f64, ell: f64) -> Result<WeightSpec, SpectralError> {
    if !(ell > 0.0 && ell < 1.0) {
        return Err(SpectralError::SingularWeight(ell));
    }
    if !(cutoff > 0.0) {
        return Err(SpectralError::Coverage { what: format!("cut-off {cutoff}") });
    }
    let [m0, m1, m2] = moments(ell);
    let det = m0 * m2 - m1 * m1;
    Ok(WeightSpec { cutoff, ell, a1: m0 / det, a2: m1 / det })
}

impl WeightSpec {
    pub fn w1(&self, s: f64) -> f64 {
        if s < self.ell * (1.0 - 1e-12) || s > 1.0 + 1e-12 {
            0.0
        } else {
            s * (self.a1 * s.ln() - self.a2)
        }
    }

    pub fn w(&self, u: f64) -> f64 {
        self.w1(u / self.cutoff) / self.cutoff
    }

    /// Grid indices of the support end points.
    fn support_nodes(&self, grid: FreqGrid) -> Result<(usize, usize), SpectralError> {
        let node = |x: f64| -> Result<usize, SpectralError> {
            let r = x / grid.step;
            let k = r.round();
            if (r - k).abs() > 1e-6 || k as usize >= grid.len {
                return Err(SpectralError::Coverage {
                    what: format!("weight support point {x} on grid step {}", grid.step),
                });
            }
            Ok(k as usize)
        };
        let lo = node(self.ell * self.cutoff)?;
        let hi = node(self.cutoff)?;
        if hi < lo + 2 {
            return Err(SpectralError::Coverage { what: "at least three support nodes".into() });
        }
        Ok((lo, hi))
    }
}

/// Quadrature weights of the estimator on grid nodes `first..first + q.len()`.
///
/// They are the trapezoid weights of `u 1{ell U <= u <= U}` times an affine
/// function of `log u`, with the two constants fixed by the discrete versions of
/// the moment conditions. Intercepts therefore cancel and a pure `log u` term is
/// returned with unit slope exactly, whatever the grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWeight {
    pub first: usize,
    pub q: Vec<f64>,
}

impl DiscreteWeight {
    pub fn new(w: &WeightSpec, grid: FreqGrid) -> Result<Self, SpectralError> {
        let (lo, hi) = w.support_nodes(grid)?;
        let c: Vec<f64> = (lo..=hi)
            .map(|k| {
                let end = if k == lo || k == hi { 0.5 } else { 1.0 };
                end * grid.u(k)
            })
            .collect();
        let x: Vec<f64> = (lo..=hi).map(|k| grid.u(k).ln()).collect();
        let total: f64 = c.iter().sum();
        let mean = c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / total;
        let xc: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let ss: f64 = c.iter().zip(&xc).map(|(a, b)| a * b * b).sum();
        let q = c.iter().zip(&xc).map(|(a, b)| a * b / ss).collect();
        Ok(DiscreteWeight { first: lo, q })
    }

    pub fn nodes(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.q.len()
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        self.q.iter().zip(&values[self.nodes()]).map(|(q, y)| q * y).sum()
    }
}

/// `alpha~_U = int w^U(u) Y~(u) du` on the curve's grid.
pub fn estimate_alpha(curve: &SpectralCurve, w: &WeightSpec) -> Result<f64, SpectralError> {
    Ok(DiscreteWeight::new(w, curve.grid)?.apply(&curve.values))
}

fn log_re_tau(model: &ModelSpec, u: f64) -> Result<f64, SpectralError> {
    let t = model.tau(u)?.re;
    if !(t > 0.0) {
        return Err(SpectralError::Domain { u, value: t });
    }
    Ok(t.ln())
}

/// `R_U = int w^U(u) log Re tau(u) du` by composite Simpson with `nodes` intervals.
pub fn bias_ru(model: &ModelSpec, w: &WeightSpec, nodes: usize) -> Result<f64, SpectralError> {
    let m = nodes + nodes % 2;
    let (a, b) = (w.ell * w.cutoff, w.cutoff);
    let h = (b - a) / m as f64;
    let mut acc = 0.0;
    for k in 0..=m {
        let u = a + k as f64 * h;
        let c = if k == 0 || k == m {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += c * w.w(u) * log_re_tau(model, u)?;
    }
    Ok(acc * h / 3.0)
}

/// The same bias with the estimator's own discrete weights on `grid`.
pub fn bias_ru_discrete(model: &ModelSpec, w: &WeightSpec, grid: FreqGrid) -> Result<f64, SpectralError> {
    let dw = DiscreteWeight::new(w, grid)?;
    dw.nodes().zip(&dw.q).map(|(k, q)| log_re_tau(model, grid.u(k)).map(|l| q * l)).sum()
}
