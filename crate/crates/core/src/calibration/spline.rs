//! Penalized natural cubic smoothing splines (Reinsch form) with GCV.
//!
//! With knot values `f` and interior second derivatives `g`, a natural cubic
//! spline satisfies `Q^T f = R g`. The minimizer of
//! `sum_i w_i (z_i - f_i)^2 + L int f''^2` solves the pentadiagonal system
//! `(R + L Q^T W^{-1} Q) g = Q^T z` and then `f = z - L W^{-1} Q g`.
//! Knots with `W^{-1} = 0` are held exactly at their data value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("knots must be strictly increasing (duplicate or unsorted at index {0})")]
    Singular(usize),
    #[error("need at least {need} data points, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("length mismatch between abscissae and values")]
    Length,
    #[error("banded factorization broke down at row {0}")]
    Factorization(usize),
}

/// Symmetric pentadiagonal matrix by its three upper diagonals.
#[derive(Debug, Clone)]
struct Penta {
    d0: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

/// `B = L D L^T` with unit lower `L` of bandwidth two.
#[derive(Debug, Clone)]
struct PentaLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl Penta {
    fn zeros(p: usize) -> Self {
        Penta { d0: vec![0.0; p], d1: vec![0.0; p], d2: vec![0.0; p] }
    }

    fn factor(&self) -> Result<PentaLdl, SplineError> {
        let p = self.d0.len();
        let mut d = vec![0.0; p];
        let mut l1 = vec![0.0; p];
        let mut l2 = vec![0.0; p];
        for i in 0..p {
            let mut di = self.d0[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if !(di > 0.0) {
                return Err(SplineError::Factorization(i));
            }
            d[i] = di;
            if i + 1 < p {
                let mut b = self.d1[i];
                if i >= 1 {
                    b -= l2[i - 1] * l1[i - 1] * d[i - 1];
                }
                l1[i] = b / di;
            }
            if i + 2 < p {
                l2[i] = self.d2[i] / di;
            }
        }
        Ok(PentaLdl { d, l1, l2 })
    }
}

impl PentaLdl {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.d.len();
        let mut x = b.to_vec();
        for i in 0..p {
            if i >= 1 {
                x[i] -= self.l1[i - 1] * x[i - 1];
            }
            if i >= 2 {
                x[i] -= self.l2[i - 2] * x[i - 2];
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..p).rev() {
            if i + 1 < p {
                x[i] -= self.l1[i] * x[i + 1];
            }
            if i + 2 < p {
                x[i] -= self.l2[i] * x[i + 2];
            }
        }
        x
    }

    /// Entries `(i,i)`, `(i,i+1)`, `(i,i+2)` of the inverse.
    fn inverse_band(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.d.len();
        let mut s0 = vec![0.0; p];
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; p];
        for i in (0..p).rev() {
            let (a, b) = (self.l1[i], self.l2[i]);
            let s11 = if i + 1 < p { s0[i + 1] } else { 0.0 };
            let s12 = if i + 2 < p { s1[i + 1] } else { 0.0 };
            let s22 = if i + 2 < p { s0[i + 2] } else { 0.0 };
            s2[i] = -a * s12 - b * s22;
            s1[i] = -a * s11 - b * s12;
            s0[i] = 1.0 / self.d[i] - a * s1[i] - b * s2[i];
        }
        (s0, s1, s2)
    }
}

/// Fitted natural cubic spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    pub knots: Vec<f64>,
    /// Fitted values at the knots.
    pub values: Vec<f64>,
    /// Second derivatives at the knots (zero at both ends).
    pub second: Vec<f64>,
    pub penalty: f64,
    pub gcv_score: f64,
    /// Trace of the hat operator restricted to the data knots.
    pub trace: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Fixed(f64),
    Gcv,
}

pub const GCV_GRID_LEN: usize = 60;
pub const GCV_MIN: f64 = 1e-8;
pub const GCV_MAX: f64 = 1e4;

pub fn gcv_grid() -> Vec<f64> {
    let (a, b) = (GCV_MIN.ln(), GCV_MAX.ln());
    (0..GCV_GRID_LEN).map(|k| (a + (b - a) * k as f64 / (GCV_GRID_LEN - 1) as f64).exp()).collect()
}

/// Knots, data and inverse weights; fixed knots carry `winv = 0`.
#[derive(Debug, Clone)]
struct Problem {
    t: Vec<f64>,
    z: Vec<f64>,
    winv: Vec<f64>,
    h: Vec<f64>,
}

impl Problem {
    fn new(t: Vec<f64>, z: Vec<f64>, winv: Vec<f64>) -> Result<Self, SplineError> {
        if t.len() != z.len() || t.len() != winv.len() {
            return Err(SplineError::Length);
        }
        if t.len() < 3 {
            return Err(SplineError::TooFew { need: 3, got: t.len() });
        }
        if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(SplineError::Singular(i + 1));
        }
        let h = t.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Problem { t, z, winv, h })
    }

    fn m(&self) -> usize {
        self.t.len()
    }

    /// Nonzeros of column `c` (interior knot `c + 1`) of `Q`, at rows `c, c+1, c+2`.
    fn q_col(&self, c: usize) -> [f64; 3] {
        let (hl, hr) = (self.h[c], self.h[c + 1]);
        [1.0 / hl, -1.0 / hl - 1.0 / hr, 1.0 / hr]
    }

    fn qt_times(&self, f: &[f64]) -> Vec<f64> {
        (0..self.m() - 2)
            .map(|c| {
                let q = self.q_col(c);
                q[0] * f[c] + q[1] * f[c + 1] + q[2] * f[c + 2]
            })
            .collect()
    }

    fn r_matrix(&self) -> Penta {
        let p = self.m() - 2;
        let mut r = Penta::zeros(p);
        for c in 0..p {
            r.d0[c] = (self.h[c] + self.h[c + 1]) / 3.0;
            if c + 1 < p {
                r.d1[c] = self.h[c + 1] / 6.0;
            }
        }
        r
    }

    fn system(&self, lambda: f64) -> Penta {
        let p = self.m() - 2;
        let mut b = self.r_matrix();
        let cols: Vec<[f64; 3]> = (0..p).map(|c| self.q_col(c)).collect();
        for c in 0..p {
            // (Q^T W^{-1} Q)_{c,c+s} = sum over shared rows
            let qc = cols[c];
            b.d0[c] += lambda * (0..3).map(|r| qc[r] * qc[r] * self.winv[c + r]).sum::<f64>();
            if c + 1 < p {
                let qn = cols[c + 1];
                b.d1[c] += lambda * (qc[1] * qn[0] * self.winv[c + 1] + qc[2] * qn[1] * self.winv[c + 2]);
            }
            if c + 2 < p {
                let qn = cols[c + 2];
                b.d2[c] += lambda * qc[2] * qn[0] * self.winv[c + 2];
            }
        }
        b
    }

    /// Fitted values, interior second derivatives and `tr H` over free knots.
    fn smooth(&self, lambda: f64) -> Result<(Vec<f64>, Vec<f64>, f64), SplineError> {
        let m = self.m();
        let p = m - 2;
        let ldl = self.system(lambda).factor()?;
        let g = ldl.solve(&self.qt_times(&self.z));
        let mut f = self.z.clone();
        for c in 0..p {
            let q = self.q_col(c);
            for r in 0..3 {
                f[c + r] -= lambda * self.winv[c + r] * q[r] * g[c];
            }
        }
        let (s0, s1, s2) = ldl.inverse_band();
        let sigma = |a: usize, b: usize| -> f64 {
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            match j - i {
                0 => s0[i],
                1 => s1[i],
                2 => s2[i],
                _ => 0.0,
            }
        };
        let mut trace = 0.0;
        for i in 0..m {
            if self.winv[i] == 0.0 {
                continue;
            }
            // row i of Q touches columns i-2, i-1, i (as interior indices)
            let mut cols: Vec<(usize, f64)> = Vec::with_capacity(3);
            for off in 0..3 {
                if i >= off && i - off < p {
                    cols.push((i - off, self.q_col(i - off)[off]));
                }
            }
            let mut qsq = 0.0;
            for &(a, qa) in &cols {
                for &(b, qb) in &cols {
                    qsq += qa * qb * sigma(a, b);
                }
            }
            trace += 1.0 - lambda * self.winv[i] * qsq;
        }
        let mut second = vec![0.0; m];
        second[1..m - 1].copy_from_slice(&g);
        Ok((f, second, trace))
    }

    fn gcv(&self, f: &[f64], trace: f64) -> f64 {
        let n = self.winv.iter().filter(|w| **w > 0.0).count() as f64;
        let rss: f64 = (0..self.m()).filter(|&i| self.winv[i] > 0.0).map(|i| (self.z[i] - f[i]).powi(2)).sum();
        n * rss / (n - trace).powi(2)
    }

    fn fit(&self, lambda: f64) -> Result<SplineFit, SplineError> {
        let (values, second, trace) = self.smooth(lambda)?;
        let gcv_score = self.gcv(&values, trace);
        Ok(SplineFit { knots: self.t.clone(), values, second, penalty: lambda, gcv_score, trace })
    }

    fn select(&self) -> Result<SplineFit, SplineError> {
        let mut best: Option<SplineFit> = None;
        let mut last_err = None;
        for lambda in gcv_grid() {
            // near-coincident knots can make the banded system numerically
            // indefinite at extreme penalties; such grid points are skipped
            let fit = match self.fit(lambda) {
                Ok(f) => f,
                Err(e @ SplineError::Factorization(_)) => {
                    log::debug!("penalty {lambda:e} skipped: {e}");
                    last_err = Some(e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            if best.as_ref().is_none_or(|b| fit.gcv_score < b.gcv_score) {
                best = Some(fit);
            }
        }
        best.ok_or_else(|| last_err.expect("every grid point failed"))
    }
}

/// How far outside the data the pinned zero knots are placed.
pub const EXTENSION: f64 = 5.0;

fn build_problem(y: &[f64], z: &[f64], pin_ends: bool) -> Result<Problem, SplineError> {
    if y.len() != z.len() {
        return Err(SplineError::Length);
    }
    if y.len() < 4 {
        return Err(SplineError::TooFew { need: 4, got: y.len() });
    }
    if pin_ends {
        let mut t = Vec::with_capacity(y.len() + 2);
        t.push(y[0] - EXTENSION);
        t.extend_from_slice(y);
        t.push(y[y.len() - 1] + EXTENSION);
        let mut zz = vec![0.0];
        zz.extend_from_slice(z);
        zz.push(0.0);
        let mut w = vec![1.0; t.len()];
        w[0] = 0.0;
        *w.last_mut().expect("non-empty") = 0.0;
        Problem::new(t, zz, w)
    } else {
        Problem::new(y.to_vec(), z.to_vec(), vec![1.0; y.len()])
    }
}

/// Smoothing spline through `(y, z)`; with `pin_ends` two extra knots at
/// `y_1 - 5` and `y_n + 5` are held at zero.
pub fn spline_fit(y: &[f64], z: &[f64], penalty: Penalty, pin_ends: bool) -> Result<SplineFit, SplineError> {
    let prob = build_problem(y, z, pin_ends)?;
    match penalty {
        Penalty::Fixed(l) => prob.fit(l),
        Penalty::Gcv => prob.select(),
    }
}

/// GCV-minimizing penalty over the fixed log grid.
pub fn gcv_select(y: &[f64], z: &[f64], pin_ends: bool) -> Result<f64, SplineError> {
    if y.len() < 8 {
        return Err(SplineError::TooFew { need: 8, got: y.len() });
    }
    Ok(build_problem(y, z, pin_ends)?.select()?.penalty)
}

/// GCV score for every grid penalty, in grid order.
pub fn gcv_scan(y: &[f64], z: &[f64], pin_ends: bool) -> Result<Vec<(f64, f64)>, SplineError> {
    let prob = build_problem(y, z, pin_ends)?;
    gcv_grid().into_iter().map(|l| prob.fit(l).map(|f| (l, f.gcv_score))).collect()
}

impl SplineFit {
    fn segment(&self, x: f64) -> usize {
        let n = self.knots.len();
        self.knots.partition_point(|k| *k <= x).clamp(1, n - 1) - 1
    }

    /// Spline value; linear continuation outside the knots.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let h = b - a;
        let (fa, fb, ga, gb) = (self.values[i], self.values[i + 1], self.second[i], self.second[i + 1]);
        if x < a {
            let slope = (fb - fa) / h - h * (2.0 * ga + gb) / 6.0;
            return fa + slope * (x - a);
        }
        if x > b {
            let slope = (fb - fa) / h + h * (ga + 2.0 * gb) / 6.0;
            return fb + slope * (x - b);
        }
        let s = x - a;
        let r = b - x;
        (r * fa + s * fb) / h - s * r / 6.0 * ((1.0 + r / h) * ga + (1.0 + s / h) * gb)
    }

    /// `int f''^2` of the fitted spline.
    pub fn roughness(&self) -> f64 {
        // f'' is piecewise linear between the knot second derivatives
        self.knots
            .windows(2)
            .zip(self.second.windows(2))
            .map(|(k, g)| (k[1] - k[0]) * (g[0] * g[0] + g[0] * g[1] + g[1] * g[1]) / 3.0)
            .sum()
    }
}

/// Penalized objective for arbitrary knot values: natural spline through
/// `values` evaluated against the data `z` on the same knots.
pub fn objective(knots: &[f64], values: &[f64], z: &[f64], winv: &[f64], lambda: f64) -> Result<f64, SplineError> {
    let prob = Problem::new(knots.to_vec(), z.to_vec(), winv.to_vec())?;
    let g = prob.r_matrix().factor()?.solve(&prob.qt_times(values));
    let mut second = vec![0.0; knots.len()];
    second[1..knots.len() - 1].copy_from_slice(&g);
    let fit = SplineFit {
        knots: knots.to_vec(),
        values: values.to_vec(),
        second,
        penalty: lambda,
        gcv_score: 0.0,
        trace: 0.0,
    };
    let rss: f64 = (0..knots.len()).filter(|&i| winv[i] > 0.0).map(|i| (z[i] - values[i]).powi(2) / winv[i]).sum();
    Ok(rss + lambda * fit.roughness())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn design(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        y.sort_by(|a, b| a.total_cmp(b));
        y
    }

    /// Dense normal-equation solve of the same minimization in the
    /// truncated-power basis; tiny problems only.
    fn brute_force_fit(y: &[f64], z: &[f64], lambda: f64) -> Vec<f64> {
        let n = y.len();
        // unknowns: knot values; objective |z - f|^2 + lambda f^T K f with K = Q R^{-1} Q^T
        let prob = Problem::new(y.to_vec(), z.to_vec(), vec![1.0; n]).unwrap();
        let p = n - 2;
        let ldl = prob.r_matrix().factor().unwrap();
        let mut k = vec![vec![0.0; n]; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let g = ldl.solve(&prob.qt_times(&e));
            for c in 0..p {
                let q = prob.q_col(c);
                for r in 0..3 {
                    k[c + r][j] += q[r] * g[c];
                }
            }
        }
        let mut a: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| lambda * k[i][j] + if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let mut b = z.to_vec();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                let (upper, lower) = a.split_at_mut(r);
                for (target, pivot) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *target -= f * pivot;
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            x[r] = (b[r] - (r + 1..n).map(|c| a[r][c] * x[c]).sum::<f64>()) / a[r][r];
        }
        x
    }

    #[test]
    fn banded_solution_matches_dense_normal_equations() {
        let y = design(12, 1);
        let z: Vec<f64> = y.iter().map(|x| x.sin() + 0.1 * x * x).collect();
        for lambda in [1e-3, 0.1, 10.0] {
            let fit = spline_fit(&y, &z, Penalty::Fixed(lambda), false).unwrap();
            let dense = brute_force_fit(&y, &z, lambda);
            for (a, b) in fit.values.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn straight_lines_are_untouched() {
        let y = design(30, 2);
        let z: Vec<f64> = y.iter().map(|x| 0.7 - 1.3 * x).collect();
        for lambda in [0.0, 1e-2, 1e3] {
            let fit = spline_fit(&y, &z, Penalty::Fixed(lambda), false).unwrap();
            for (a, b) in fit.values.iter().zip(&z) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!(fit.eval(0.123) - (0.7 - 1.3 * 0.123) < 1e-10);
        }
    }

    #[test]
    fn zero_penalty_interpolates() {
        let y = design(40, 3);
        let z: Vec<f64> = y.iter().map(|x| (3.0 * x).cos()).collect();
        let fit = spline_fit(&y, &z, Penalty::Fixed(0.0), false).unwrap();
        assert!(fit.values.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!((fit.trace - 40.0).abs() < 1e-9);
    }

    #[test]
    fn huge_penalty_tends_to_least_squares_line() {
        let y = design(50, 4);
        let z: Vec<f64> = y.iter().map(|x| x * x * x - x).collect();
        let n = y.len() as f64;
        let (my, mz) = (y.iter().sum::<f64>() / n, z.iter().sum::<f64>() / n);
        let sxy: f64 = y.iter().zip(&z).map(|(a, b)| (a - my) * (b - mz)).sum();
        let sxx: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
        let slope = sxy / sxx;
        let fit = spline_fit(&y, &z, Penalty::Fixed(1e9), false).unwrap();
        for (x, f) in y.iter().zip(&fit.values) {
            assert!((f - (mz + slope * (x - my))).abs() < 1e-6);
        }
        assert!((fit.trace - 2.0).abs() < 1e-5);
    }

    #[test]
    fn pinned_ends_stay_at_zero() {
        let y = design(60, 5);
        let z: Vec<f64> = y.iter().map(|x| (-x * x).exp()).collect();
        let fit = spline_fit(&y, &z, Penalty::Fixed(1.0), true).unwrap();
        assert!(fit.values[0].abs() < 1e-8 && fit.values.last().unwrap().abs() < 1e-8);
        assert_eq!(fit.knots.len(), 62);
        assert_eq!(fit.second[0], 0.0);
    }

    #[test]
    fn minimizer_is_optimal_against_perturbations() {
        let y = design(25, 6);
        let mut rng = rng_from_seed(6);
        let z: Vec<f64> = y.iter().map(|x| x.sin() + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let lambda = 0.05;
        let fit = spline_fit(&y, &z, Penalty::Fixed(lambda), false).unwrap();
        let w = vec![1.0; y.len()];
        let base = objective(&fit.knots, &fit.values, &z, &w, lambda).unwrap();
        for j in 0..y.len() {
            for s in [-1e-4, 1e-4] {
                let mut v = fit.values.clone();
                v[j] += s;
                assert!(objective(&fit.knots, &v, &z, &w, lambda).unwrap() >= base);
            }
        }
    }

    #[test]
    fn trace_is_monotone_and_bounded() {
        let y = design(80, 7);
        let z: Vec<f64> = y.iter().map(|x| x.cos()).collect();
        let mut prev = f64::INFINITY;
        for lambda in gcv_grid() {
            let t = spline_fit(&y, &z, Penalty::Fixed(lambda), false).unwrap().trace;
            assert!(t <= prev + 1e-9 && (2.0 - 1e-6..=80.0 + 1e-9).contains(&t));
            prev = t;
        }
    }

    #[test]
    fn gcv_prefers_little_smoothing_for_clean_data() {
        let y = design(100, 8);
        let z: Vec<f64> = y.iter().map(|x| (2.0 * x).sin()).collect();
        let scan = gcv_scan(&y, &z, false).unwrap();
        let best = gcv_select(&y, &z, false).unwrap();
        assert!(best <= 1e-4, "selected {best}");
        let at = scan.iter().position(|(l, _)| *l == best).unwrap();
        assert!(scan[at..].windows(2).filter(|w| w[1].1 < w[0].1).count() <= 2);
    }

    #[test]
    fn gcv_prefers_heavy_smoothing_for_pure_noise() {
        // a single noise draw can show spurious structure, so look at the typical choice
        let mut picks: Vec<f64> = (0..21)
            .map(|seed| {
                let y = design(300, 100 + seed);
                let mut rng = rng_from_seed(200 + seed);
                let z: Vec<f64> = y.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                gcv_select(&y, &z, false).unwrap()
            })
            .collect();
        picks.sort_by(|a, b| a.total_cmp(b));
        let median = picks[10];
        assert!(median >= gcv_grid()[45], "median selection {median}");
    }

    #[test]
    fn gcv_choice_is_scale_free() {
        let y = design(100, 10);
        let mut rng = rng_from_seed(10);
        let z: Vec<f64> = y.iter().map(|x| x.sin() + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let z2: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        assert_eq!(gcv_select(&y, &z, true).unwrap(), gcv_select(&y, &z2, true).unwrap());
    }

    #[test]
    fn duplicates_are_singular() {
        let y = vec![0.0, 1.0, 1.0, 2.0, 3.0];
        let z = vec![0.0; 5];
        assert!(matches!(spline_fit(&y, &z, Penalty::Fixed(1.0), false), Err(SplineError::Singular(2))));
    }
}
