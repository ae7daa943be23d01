//! Exact Fourier transform of a fitted spline against the damping `e^{-y}`.

use num_complex::Complex64;

use super::spline::SplineFit;

/// `int_{t_0}^{t_last} exp((iv - 1) y) S(y) dy` for every `v`.
pub fn fourier_of_fit(fit: &SplineFit, v_grid: &[f64]) -> Vec<Complex64> {
    fourier_of_fit_damped(fit, v_grid, 1.0)
}

/// `int_{t_0}^{t_last} exp((iv - damping) y) S(y) dy` for every `v`.
///
/// Each knot interval carries a cubic `p`, and with `s = iv - damping`,
/// `int e^{sy} p = e^{sy} sum_k (-1)^k p^{(k)} / s^{k+1}` evaluated at the ends.
/// Every term telescopes except the jumps in `p'''` and the two outer ends.
/// At `s = 0` the plain cubic integral is used instead.
pub fn fourier_of_fit_damped(fit: &SplineFit, v_grid: &[f64], damping: f64) -> Vec<Complex64> {
    v_grid.iter().map(|&v| transform_at(fit, v, damping)).collect()
}

fn plain_integral(fit: &SplineFit) -> f64 {
    fit.knots
        .windows(2)
        .zip(fit.values.windows(2).zip(fit.second.windows(2)))
        .map(|(k, (f, g))| {
            let h = k[1] - k[0];
            0.5 * h * (f[0] + f[1]) - h.powi(3) * (g[0] + g[1]) / 24.0
        })
        .sum()
}

fn transform_at(fit: &SplineFit, v: f64, damping: f64) -> Complex64 {
    let s = Complex64::new(-damping, v);
    if s.norm() == 0.0 {
        return Complex64::new(plain_integral(fit), 0.0);
    }
    let (s1, s2, s3, s4) = (s.inv(), s.powi(-2), s.powi(-3), s.powi(-4));
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, f) in fit.knots.windows(2).zip(fit.values.windows(2).zip(fit.second.windows(2))) {
        let (a, b) = (k[0], k[1]);
        let h = b - a;
        let ((fa, fb), (ga, gb)) = ((f.0[0], f.0[1]), (f.1[0], f.1[1]));
        let chord = (fb - fa) / h;
        let da = chord - h * (2.0 * ga + gb) / 6.0;
        let db = chord + h * (ga + 2.0 * gb) / 6.0;
        let third = (gb - ga) / h;
        let at = |y: f64, p: f64, d: f64, g: f64| (s * y).exp() * (p * s1 - d * s2 + g * s3 - third * s4);
        acc += at(b, fb, db, gb) - at(a, fa, da, ga);
    }
    acc
}
