//! Normalized option prices `O_T(y)` from the characteristic function.
//!
//! With `G(z) = (1 - phi_T(z - i)) / (z (z - i))` the Fourier transform of `O_T`,
//! inversion along `Im z = -a` and dropping the `1 / (z (z - i))` part (it
//! integrates to zero once the contour is closed away from its poles) gives
//!
//! `O_T(y) = -(e^{-a y} / pi) Re int_0^inf e^{-i v y} phi_T(v - i(1+a)) / ((v - ia)(v - i(1+a))) dv`
//!
//! with `a > 0` for calls (`y >= 0`) and `a < -1` for puts (`y < 0`). The
//! integrand decays like `|phi_T|`, so a plain trapezoid sum converges fast.

use num_complex::Complex64;
use thiserror::Error;

use crate::levy_models::{ModelError, ModelSpec};

const MARTINGALE_TOL: f64 = 1e-8;
const BOUNDARY_TOL: f64 = 1e-13;
const MIN_NODES: usize = 1 << 15;
const MAX_STEP: f64 = 0.05;
const MAX_WINDOW: f64 = 1e6;
const RESYNC: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("martingale condition violated: |phi_T(-i) - 1| = {0:.3e}")]
    MartingaleViolation(f64),
    #[error("E[exp(2 Y_T)] is infinite: moment strip ({lo}, {hi}) does not reach 2")]
    NotIntegrable { lo: f64, hi: f64 },
    #[error("transform does not decay on a window of half-width {0}")]
    NoDecay(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Trapezoid weights of one inversion contour.
#[derive(Debug, Clone)]
struct Contour {
    a: f64,
    dv: f64,
    weights: Vec<Complex64>,
}

impl Contour {
    fn build<F>(cf: &F, c: f64) -> Result<Self, PricingError>
    where
        F: Fn(Complex64) -> Result<Complex64, ModelError>,
    {
        let a = c - 1.0;
        let integrand = |v: f64| -> Result<Complex64, PricingError> {
            let num = cf(Complex64::new(v, -c))?;
            Ok(num / (Complex64::new(v, -a) * Complex64::new(v, -c)))
        };
        let mut window = 16.0;
        while integrand(window)?.norm() > BOUNDARY_TOL || integrand(0.75 * window)?.norm() > BOUNDARY_TOL {
            window *= 2.0;
            if window > MAX_WINDOW {
                return Err(PricingError::NoDecay(window));
            }
        }
        let nodes = MIN_NODES.max((window / MAX_STEP).ceil() as usize);
        let dv = window / nodes as f64;
        let mut weights =
            (0..=nodes).map(|k| integrand(k as f64 * dv).map(|w| w * dv)).collect::<Result<Vec<_>, _>>()?;
        weights[0] *= 0.5;
        Ok(Contour { a, dv, weights })
    }

    fn eval(&self, y: f64) -> f64 {
        let step = Complex64::from_polar(1.0, -self.dv * y);
        let mut acc = Complex64::new(0.0, 0.0);
        for (block, chunk) in self.weights.chunks(RESYNC).enumerate() {
            let mut rot = Complex64::from_polar(1.0, -((block * RESYNC) as f64) * self.dv * y);
            for w in chunk {
                acc += w * rot;
                rot *= step;
            }
        }
        -(-self.a * y).exp() / std::f64::consts::PI * acc.re
    }
}

/// Prices `O_T(y)` for many `y` against one precomputed risk-neutral cf.
#[derive(Debug, Clone)]
pub struct FourierPricer {
    // `None` when `phi_T` is identically one and every price vanishes.
    contours: Option<(Contour, Contour)>,
}

impl FourierPricer {
    /// `cf(z) = phi_T(z)` for complex `z`; `strip` is the open moment strip of `Y_T`.
    pub fn from_cf<F>(cf: F, strip: (f64, f64)) -> Result<Self, PricingError>
    where
        F: Fn(Complex64) -> Result<Complex64, ModelError>,
    {
        let (lo, hi) = strip;
        if !(hi > 2.0 && lo < 0.0) {
            return Err(PricingError::NotIntegrable { lo, hi });
        }
        let gap = (cf(Complex64::new(0.0, -1.0))? - 1.0).norm();
        if gap > MARTINGALE_TOL {
            return Err(PricingError::MartingaleViolation(gap));
        }
        let trivial = [0.5, 3.0, 40.0, 700.0]
            .iter()
            .map(|&v| cf(Complex64::new(v, 0.0)).map(|p| (p - 1.0).norm() < 1e-15))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .all(|b| b);
        if trivial {
            return Ok(FourierPricer { contours: None });
        }
        let c_call = if hi.is_finite() { 0.5 * (1.0 + hi) } else { 2.0 };
        let c_put = if lo.is_finite() { 0.5 * lo } else { -1.0 };
        Ok(FourierPricer { contours: Some((Contour::build(&cf, c_call)?, Contour::build(&cf, c_put)?)) })
    }

    pub fn new(model_q: &ModelSpec, t: f64) -> Result<Self, PricingError> {
        Self::from_cf(|z| model_q.cf_at_complex(t, z), model_q.moment_strip())
    }

    pub fn price(&self, y: f64) -> f64 {
        match &self.contours {
            None => 0.0,
            Some((call, put)) => {
                if y >= 0.0 {
                    call.eval(y)
                } else {
                    put.eval(y)
                }
            }
        }
    }

    pub fn prices(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.price(y)).collect()
    }
}

/// `O_T` on `y_grid` for a risk-neutral model.
pub fn price_ot(model_q: &ModelSpec, t: f64, y_grid: &[f64]) -> Result<Vec<f64>, PricingError> {
    Ok(FourierPricer::new(model_q, t)?.prices(y_grid))
}

/// Splits normalized prices into (call, put) legs through put-call parity.
pub fn parity_split(o_values: &[f64], y_grid: &[f64], spot: f64) -> (Vec<f64>, Vec<f64>) {
    o_values
        .iter()
        .zip(y_grid)
        .map(|(&o, &y)| {
            let fwd = spot * (1.0 - y.exp());
            if y >= 0.0 {
                (spot * o, spot * o - fwd)
            } else {
                (spot * o + fwd, spot * o)
            }
        })
        .unzip()
}
