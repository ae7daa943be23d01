#![allow(dead_code)]

use levyspec::levy_models::{density_on_grid, Density, ModelSpec, UniformGrid};

/// Density of `X_t` on `[-spacing * 2^(log2_points - 1), ...]` with a node at every multiple of `spacing`.
pub fn wide_density(m: &ModelSpec, t: f64, spacing: f64, log2_points: u32) -> Density {
    density_on_grid(m, t, UniformGrid { center: 0.0, dx: spacing, points: 1 << log2_points }).unwrap()
}

/// Normalized out-of-the-money price by trapezoid against `d`. The call payoff
/// is cut at `x = call_cut`, beyond which the density is below round-off.
pub fn otm_trapezoid(d: &Density, y: f64, call_cut: f64) -> f64 {
    let g = d.grid;
    let payoff = |x: f64| {
        if y >= 0.0 {
            if x > call_cut {
                0.0
            } else {
                (x.exp() - y.exp()).max(0.0)
            }
        } else {
            (y.exp() - x.exp()).max(0.0)
        }
    };
    let f: Vec<f64> = (0..g.points).map(|j| d.values[j] * payoff(g.x(j))).collect();
    g.dx * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[f.len() - 1]))
}

/// Richardson-extrapolated payoff quadrature from spacings `h` and `h / 2`;
/// strikes on the `h` lattice keep the kink on a node so the error is `O(h^2)`.
pub fn payoff_quadrature(m: &ModelSpec, t: f64, ys: &[f64], h: f64, log2_points: u32) -> Vec<f64> {
    let coarse = wide_density(m, t, h, log2_points);
    let fine = wide_density(m, t, 0.5 * h, log2_points + 1);
    ys.iter().map(|&y| (4.0 * otm_trapezoid(&fine, y, 25.0) - otm_trapezoid(&coarse, y, 25.0)) / 3.0).collect()
}
