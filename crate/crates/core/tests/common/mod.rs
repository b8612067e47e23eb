//! Independent reference computations for the integration tests.
//!
//! Nothing here calls the library's probability, kernel or evolution code; the
//! point is to have a second derivation to compare against.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

/// `u_a(t) = (1 + tan a / tan t) / 2`, straight from the printed definition.
pub fn u_ref(a: f64, t: f64) -> f64 {
    0.5 * (1.0 + a.tan() / t.tan())
}

/// The four branch probabilities transcribed one function at a time from the
/// printed table, with half-open intervals read literally.
pub fn probs_ref(alpha: f64, t: f64) -> [f64; 4] {
    let a = alpha;
    let c = 2.0 * (2.0 * a).cos();
    let p1 = if t < a {
        1.0
    } else if t < PI - 3.0 * a {
        u_ref(a, t)
    } else if t < PI - 2.0 * a {
        c * u_ref(2.0 * a, t)
    } else {
        0.0
    };
    let p2 = if t < PI - 3.0 * a {
        0.0
    } else if t < PI - 2.0 * a {
        u_ref(a, t) - c * u_ref(2.0 * a, t)
    } else if t < PI - a {
        u_ref(a, t)
    } else {
        0.0
    };
    let p3 = if t < 2.0 * a {
        0.0
    } else if t < 3.0 * a {
        c * u_ref(2.0 * a, -t)
    } else if t < PI - a {
        u_ref(a, -t)
    } else {
        1.0
    };
    let p4 = if t < a {
        0.0
    } else if t < 2.0 * a {
        u_ref(a, -t)
    } else if t < 3.0 * a {
        u_ref(a, -t) - c * u_ref(2.0 * a, -t)
    } else {
        0.0
    };
    [p1, p2, p3, p4]
}

/// The four exit maps as printed.
pub fn tau_ref(alpha: f64, k: usize, t: f64) -> f64 {
    match k {
        0 => t + 2.0 * alpha,
        1 => -t + 2.0 * PI - 4.0 * alpha,
        2 => t - 2.0 * alpha,
        3 => -t + 4.0 * alpha,
        _ => unreachable!(),
    }
}

/// Preimage of `c` under exit map `k`.
pub fn tau_inverse(alpha: f64, k: usize, c: f64) -> f64 {
    match k {
        0 => c - 2.0 * alpha,
        1 => 2.0 * PI - 4.0 * alpha - c,
        2 => c + 2.0 * alpha,
        3 => 4.0 * alpha - c,
        _ => unreachable!(),
    }
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson_step(f, a, fa, m, fm);
    let (rm, frm, right) = simpson_step(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of a smooth integrand on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson_step(&f, a, fa, b, fb);
    simpson_rec(&f, a, fa, b, fb, m, fm, whole, tol, 40)
}

/// `int K(t, [lo, hi]) dmu(t)` by quadrature. The integrand
/// `sum_k p_k(t) 1_A(tau_k t) sin(t) / 2` is smooth between the table's
/// breakpoints and the preimages of the ends of `A`, so the domain is cut
/// there and each piece integrated separately. `prob(k, t)` supplies the
/// probabilities under test.
pub fn kernel_mass_under_mu<P: Fn(usize, f64) -> f64>(
    alpha: f64,
    lo: f64,
    hi: f64,
    prob: P,
) -> f64 {
    let mut cuts: Vec<f64> = vec![0.0, PI];
    for j in 1..=3 {
        cuts.push(j as f64 * alpha);
        cuts.push(PI - j as f64 * alpha);
    }
    for k in 0..4 {
        for c in [lo, hi] {
            cuts.push(tau_inverse(alpha, k, c));
        }
    }
    cuts.retain(|c| (0.0..=PI).contains(c));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-15 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let active: Vec<usize> = (0..4)
            .filter(|&k| {
                let img = tau_ref(alpha, k, mid);
                lo <= img && img <= hi
            })
            .collect();
        if active.is_empty() {
            continue;
        }
        // Evaluate the formulas of the piece containing `mid` even at the
        // piece's endpoints, so that a half-open jump never leaks in.
        let piece_prob = |t: f64| {
            let inner = t.clamp(a + (b - a) * 1e-12, b - (b - a) * 1e-12);
            active.iter().map(|&k| prob(k, inner)).sum::<f64>()
        };
        total += adaptive_simpson(|t| piece_prob(t) * 0.5 * t.sin(), a, b, 1e-14);
    }
    total
}

/// `mu([lo, hi])` in closed form.
pub fn mu_ref(lo: f64, hi: f64) -> f64 {
    0.5 * (lo.cos() - hi.cos())
}

/// A point of the lattice `sigma * theta0 + 2 m alpha + 2 j pi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LatticePoint {
    pub sigma: i8,
    pub m: i64,
    pub j: i64,
}

impl LatticePoint {
    pub fn value(self, theta0: f64, alpha: f64) -> f64 {
        f64::from(self.sigma) * theta0 + 2.0 * self.m as f64 * alpha + 2.0 * self.j as f64 * PI
    }

    /// Action of exit map `k` on the lattice coordinates.
    pub fn apply(self, k: usize) -> LatticePoint {
        let LatticePoint { sigma, m, j } = self;
        match k {
            0 => LatticePoint { sigma, m: m + 1, j },
            1 => LatticePoint {
                sigma: -sigma,
                m: -m - 2,
                j: 1 - j,
            },
            2 => LatticePoint { sigma, m: m - 1, j },
            3 => LatticePoint {
                sigma: -sigma,
                m: 2 - m,
                j: -j,
            },
            _ => unreachable!(),
        }
    }
}

/// The lattice points reachable in exactly `n` steps from `theta0`, keeping
/// only branches whose reference probability is positive.
pub fn reachable_lattice(theta0: f64, alpha: f64, n: usize) -> BTreeSet<LatticePoint> {
    let mut level = BTreeSet::from([LatticePoint {
        sigma: 1,
        m: 0,
        j: 0,
    }]);
    for _ in 0..n {
        let mut next = BTreeSet::new();
        for pt in &level {
            let t = pt.value(theta0, alpha);
            let p = probs_ref(alpha, t);
            for (k, &pk) in p.iter().enumerate() {
                if pk > 0.0 {
                    next.insert(pt.apply(k));
                }
            }
        }
        level = next;
    }
    level
}

/// Largest absolute per-bin difference between two mass vectors.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
