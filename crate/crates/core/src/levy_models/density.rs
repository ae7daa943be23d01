//! Density of `X_t` by discrete Fourier inversion of the characteristic function.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use super::model::{ModelError, ModelSpec};

const BOUNDARY_RATIO: f64 = 1e-7;
const RINGING_TOL: f64 = 1e-8;
const MASS_TOL: f64 = 1e-6;
/// `|phi|` at the Nyquist frequency below which aliasing is negligible.
const NYQUIST_CF_TOL: f64 = 1e-13;
const MIN_POINTS: usize = 1 << 14;
const MAX_POINTS: usize = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("grid too narrow: boundary density is {ratio:.3e} of the peak")]
    GridTooNarrow { ratio: f64 },
    #[error("grid too coarse: |cf| = {cf_abs:.3e} at the Nyquist frequency")]
    GridTooCoarse { cf_abs: f64 },
    #[error("Fourier ringing: most negative value {min:.3e}")]
    Ringing { min: f64 },
    #[error("density integrates to {mass}, not 1")]
    NotNormalized { mass: f64 },
    #[error("grid needs more than {MAX_POINTS} points")]
    TooManyPoints,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `points` equispaced nodes `x_j = center + (j - points/2) dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub center: f64,
    pub dx: f64,
    pub points: usize,
}

impl UniformGrid {
    pub fn x(&self, j: usize) -> f64 {
        self.center + (j as f64 - (self.points / 2) as f64) * self.dx
    }
}

#[derive(Debug, Clone)]
pub struct Density {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl Density {
    pub fn mass(&self) -> f64 {
        trapezoid(&self.values, self.grid.dx)
    }
}

fn trapezoid(v: &[f64], dx: f64) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    dx * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

/// Inverts an arbitrary characteristic function on `grid`.
///
/// With `u_k = (k - N/2) du`, `du = 2 pi / (N dx)`, the inversion sum
/// `(du / 2 pi) sum_k phi(u_k) exp(-i u_k x_j)` reduces to one forward FFT after
/// the usual `(-1)^k` and `(-1)^j` shifts.
pub fn density_from_cf<F>(cf: F, grid: UniformGrid) -> Result<Density, DensityError>
where
    F: Fn(f64) -> Result<Complex64, ModelError>,
{
    let n = grid.points;
    if n < 8 || !n.is_multiple_of(2) || !(grid.dx > 0.0) {
        return Err(DensityError::InvalidGrid(format!("{grid:?}")));
    }
    let du = 2.0 * std::f64::consts::PI / (n as f64 * grid.dx);
    let nyq = cf(std::f64::consts::PI / grid.dx)?.norm();
    if nyq > NYQUIST_CF_TOL {
        return Err(DensityError::GridTooCoarse { cf_abs: nyq });
    }
    let half = (n / 2) as f64;
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let u = (k as f64 - half) * du;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            cf(u).map(|p| sign * p * Complex64::from_polar(1.0, -u * grid.center))
        })
        .collect::<Result<_, _>>()?;
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = du / (2.0 * std::f64::consts::PI);
    let mut values: Vec<f64> =
        buf.iter().enumerate().map(|(j, z)| if j % 2 == 0 { scale * z.re } else { -scale * z.re }).collect();

    let peak = values.iter().cloned().fold(f64::MIN, f64::max);
    let edge = values[0].abs().max(values[n - 1].abs());
    if !(peak > 0.0) || edge > BOUNDARY_RATIO * peak {
        return Err(DensityError::GridTooNarrow { ratio: edge / peak.max(f64::MIN_POSITIVE) });
    }
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    if min < -RINGING_TOL {
        return Err(DensityError::Ringing { min });
    }
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let d = Density { grid, values };
    let mass = d.mass();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(DensityError::NotNormalized { mass });
    }
    Ok(d)
}

pub fn density_on_grid(model: &ModelSpec, t: f64, grid: UniformGrid) -> Result<Density, DensityError> {
    density_from_cf(|u| model.cf_at(t, u), grid)
}

/// Smallest power-of-two frequency with `|phi(u)|` below the Nyquist tolerance.
fn decay_frequency<F>(cf: &F) -> Result<f64, DensityError>
where
    F: Fn(f64) -> Result<Complex64, ModelError>,
{
    let mut u = 1.0;
    while u < 1e9 {
        if cf(u)?.norm() < 0.1 * NYQUIST_CF_TOL && cf(1.5 * u)?.norm() < 0.1 * NYQUIST_CF_TOL {
            return Ok(u);
        }
        u *= 2.0;
    }
    // no decay at all: a point mass or something too close to one
    Err(DensityError::GridTooNarrow { ratio: f64::INFINITY })
}

/// Chooses the grid automatically: the step from the cf decay, the width by
/// doubling from a scale guess until the boundary and mass checks pass.
pub fn density_auto_from_cf<F>(cf: F, center: f64) -> Result<Density, DensityError>
where
    F: Fn(f64) -> Result<Complex64, ModelError>,
{
    let u_max = decay_frequency(&cf)?;
    let dx_max = std::f64::consts::PI / u_max;
    // width guess: a few multiples of the inverse of the frequency where |phi| = 1/2
    let mut u_half = u_max;
    while u_half > 1e-6 && cf(u_half)?.norm() < 0.5 {
        u_half *= 0.5;
    }
    let mut half_width = (8.0 / u_half).max(16.0 * dx_max);
    loop {
        let needed = (2.0 * half_width / dx_max).ceil() as usize;
        let points = needed.next_power_of_two().max(MIN_POINTS);
        if points > MAX_POINTS {
            return Err(DensityError::TooManyPoints);
        }
        let grid = UniformGrid { center, dx: 2.0 * half_width / points as f64, points };
        match density_from_cf(&cf, grid) {
            Ok(d) => return Ok(d),
            Err(DensityError::GridTooNarrow { .. })
            | Err(DensityError::NotNormalized { .. })
            | Err(DensityError::Ringing { .. }) => {
                half_width *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn density_auto(model: &ModelSpec, t: f64) -> Result<Density, DensityError> {
    let center = model.mean(t).unwrap_or(model.mu * t);
    density_auto_from_cf(|u| model.cf_at(t, u), center)
}
