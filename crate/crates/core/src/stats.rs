//! Binomial z-scores and product-histogram checks shared by the Monte Carlo
//! diagnostics.

use serde::Serialize;

use crate::measure::{bin_edge, mu_mass};

/// `|freq - p| / sqrt(p (1 - p) / n)`. A degenerate `p` of 0 or 1 gives 0 on
/// an exact match and infinity otherwise.
pub fn binomial_z(freq: f64, p: f64, n: u64) -> f64 {
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    let diff = (freq - p).abs();
    if sd > 0.0 {
        diff / sd
    } else if diff < 1e-15 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Result of comparing a 2-D histogram over `[0, 1) x [0, pi]` with the
/// product of the uniform law and the sine law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductHistogramCheck {
    pub samples: u64,
    pub bins_y: usize,
    pub bins_theta: usize,
    pub max_z: f64,
    pub bins_failed: usize,
    pub max_abs_dev: f64,
    pub y_marginal_max_z: f64,
    pub theta_marginal_max_z: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Tallies `(y, theta)` points into `bins_y x bins_theta` cells and checks each
/// cell's frequency against its uniform-times-sine mass within `threshold`
/// binomial standard errors.
pub fn product_histogram_check(
    counts: &[u64],
    bins_y: usize,
    bins_theta: usize,
    threshold: f64,
) -> ProductHistogramCheck {
    assert_eq!(counts.len(), bins_y * bins_theta);
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let theta_mass: Vec<f64> = (0..bins_theta)
        .map(|j| mu_mass(bin_edge(j, bins_theta), bin_edge(j + 1, bins_theta)))
        .collect();
    let y_mass = 1.0 / bins_y as f64;

    let mut max_z: f64 = 0.0;
    let mut max_abs_dev: f64 = 0.0;
    let mut bins_failed = 0;
    let mut y_marg = vec![0u64; bins_y];
    let mut t_marg = vec![0u64; bins_theta];
    for iy in 0..bins_y {
        for jt in 0..bins_theta {
            let c = counts[iy * bins_theta + jt];
            y_marg[iy] += c;
            t_marg[jt] += c;
            let m = y_mass * theta_mass[jt];
            let f = c as f64 / nf;
            let z = binomial_z(f, m, n);
            max_abs_dev = max_abs_dev.max((f - m).abs());
            max_z = max_z.max(z);
            if z >= threshold {
                bins_failed += 1;
            }
        }
    }
    let y_marginal_max_z = y_marg
        .iter()
        .map(|&c| binomial_z(c as f64 / nf, y_mass, n))
        .fold(0.0, f64::max);
    let theta_marginal_max_z = t_marg
        .iter()
        .zip(&theta_mass)
        .map(|(&c, &m)| binomial_z(c as f64 / nf, m, n))
        .fold(0.0, f64::max);
    ProductHistogramCheck {
        samples: n,
        bins_y,
        bins_theta,
        max_z,
        bins_failed,
        max_abs_dev,
        y_marginal_max_z,
        theta_marginal_max_z,
        threshold,
        passed: bins_failed == 0,
    }
}

/// Cell index of `(y, theta)` in a `bins_y x bins_theta` grid, row-major in `y`.
#[inline]
pub fn product_cell(y: f64, theta: f64, bins_y: usize, bins_theta: usize) -> usize {
    let iy = ((y * bins_y as f64) as usize).min(bins_y - 1);
    iy * bins_theta + crate::measure::bin_index(theta, bins_theta)
}
