//! Deterministic skew-product representation of the random map.
//!
//! The state is a pair `(y, x)` with `y` in `[0, 1)` and `x` an angle. The unit
//! interval over each `x` is cut into four slabs of widths `p_1(x)..p_4(x)`;
//! the slab holding `y` picks the branch `k`, `x` moves to `tau_k(x)` and `y`
//! is rescaled affinely so that the slab fills `[0, 1)` again. Iterating this
//! map with `y` uniform reproduces the random map on the angle.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{Angle, Branch, MapParams};
use crate::measure::{AtomicMeasure, Evolver, Interval};
use crate::oracle::Z_THRESHOLD;
use crate::rng::CounterRng;
use crate::stats::{product_cell, product_histogram_check, ProductHistogramCheck};

/// How far `y` may overshoot 1 from rounding before it counts as a bug.
const Y_OVERSHOOT_EPS: f64 = 1e-12;

/// Largest `f64` strictly below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SkewPoint {
    pub y: f64,
    pub x: Angle,
}

impl SkewPoint {
    pub fn new(y: f64, x: Angle) -> Result<Self> {
        if !(0.0..1.0).contains(&y) {
            return Err(Error::InvalidArgument(format!("y = {y} is not in [0, 1)")));
        }
        Ok(SkewPoint { y, x })
    }
}

/// The branch whose slab over `p.x` contains `p.y`.
pub fn locate_branch(p: SkewPoint, params: &MapParams) -> Branch {
    params.sample_branch(p.x, p.y)
}

/// One application of the skew map.
pub fn skew_step(p: SkewPoint, params: &MapParams) -> SkewPoint {
    let (probs, slabs) = params.slabs(p.x);
    let k = params.sample_branch(p.x, p.y);
    let mut y = (p.y - slabs[k.index()].0) / probs[k.index()];
    if y >= 1.0 {
        assert!(y < 1.0 + Y_OVERSHOOT_EPS, "skew map pushed y to {y}");
        y = ONE_MINUS_ULP;
    }
    let x =
        Angle::snapped(params.tau(k, p.x)).expect("positive-probability branch stays in [0, pi]");
    SkewPoint { y, x }
}

/// A nonempty branch sequence `(i_1, ..., i_n)`.
///
/// Stored in written order: `i_n` is the branch taken first and `i_1` the one
/// taken last.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CylinderWord(Vec<Branch>);

impl CylinderWord {
    pub fn new(indices: Vec<Branch>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(CylinderWord(indices))
    }

    pub fn indices(&self) -> &[Branch] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Branches in the order the dynamics visits them (`i_n` first).
    pub fn visit_order(&self) -> impl Iterator<Item = Branch> + '_ {
        self.0.iter().rev().copied()
    }

    /// The word `(i_1, ..., i_n, first)`: one more step taken before the rest.
    pub fn preceded_by(&self, first: Branch) -> CylinderWord {
        let mut v = self.0.clone();
        v.push(first);
        CylinderWord(v)
    }

    /// All `4^n` words of length `n`.
    pub fn all_of_length(n: usize) -> Vec<CylinderWord> {
        assert!(n >= 1);
        let mut words: Vec<Vec<Branch>> = vec![vec![]];
        for _ in 0..n {
            words = words
                .into_iter()
                .flat_map(|w| {
                    Branch::ALL.into_iter().map(move |b| {
                        let mut v = w.clone();
                        v.push(b);
                        v
                    })
                })
                .collect();
        }
        words.into_iter().map(CylinderWord).collect()
    }
}

/// Parses `"1,2,4"` or `"124"`.
impl FromStr for CylinderWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parts: Vec<String> = if s.contains(',') {
            s.split(',').map(|p| p.trim().to_string()).collect()
        } else {
            s.chars().map(String::from).collect()
        };
        let mut out = Vec::with_capacity(parts.len());
        for p in parts {
            let k: u32 = p.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad branch index {p:?} in word {s:?}"))
            })?;
            out.push(Branch::try_from(k)?);
        }
        CylinderWord::new(out)
    }
}

impl fmt::Display for CylinderWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for CylinderWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|b| b.number()))
    }
}

/// `[lo, hi)` inside `[0, 1)`; empty when `lo == hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiberInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FiberInterval {
    pub const EMPTY: FiberInterval = FiberInterval { lo: 0.0, hi: 0.0 };

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn length(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y < self.hi
    }
}

/// Forward orbit of `x` along the word, with the probability of each step.
/// Stops early at the first zero-probability step.
fn orbit(x: Angle, w: &CylinderWord, params: &MapParams) -> Vec<(Angle, Branch, f64, f64)> {
    let mut steps = Vec::with_capacity(w.len());
    let mut cur = x;
    for b in w.visit_order() {
        let (probs, slabs) = params.slabs(cur);
        let p = probs[b.index()];
        steps.push((cur, b, p, slabs[b.index()].0));
        if p == 0.0 {
            break;
        }
        cur = Angle::snapped(params.tau(b, cur))
            .expect("positive-probability branch stays in [0, pi]");
    }
    steps
}

/// The set of `y` over `x` whose skew orbit follows the word, as an interval.
///
/// Built from the innermost step outward: the last step's slab is pulled back
/// through each earlier step's affine rescaling `y -> (y - lo) / p`.
pub fn cylinder_fiber(x: Angle, w: &CylinderWord, params: &MapParams) -> FiberInterval {
    let steps = orbit(x, w, params);
    if steps.len() < w.len() || steps.iter().any(|s| s.2 == 0.0) {
        return FiberInterval::EMPTY;
    }
    let mut fiber = FiberInterval { lo: 0.0, hi: 1.0 };
    for &(at, b, p, slab_lo) in steps.iter().rev() {
        let slab_hi = params.slabs(at).1[b.index()].1;
        // Full-width ends map to the slab ends exactly, so fibers tile
        // `[0, 1)` the same way `locate_branch` does.
        let lo = if fiber.lo == 0.0 {
            slab_lo
        } else {
            slab_lo + p * fiber.lo
        };
        let hi = if fiber.hi == 1.0 {
            slab_hi
        } else {
            (slab_lo + p * fiber.hi).min(slab_hi)
        };
        assert!(lo <= hi, "cylinder fiber inverted: [{lo}, {hi})");
        fiber = FiberInterval { lo, hi };
    }
    fiber
}

/// Product of the branch probabilities along the orbit of `x`.
pub fn fiber_measure(x: Angle, w: &CylinderWord, params: &MapParams) -> f64 {
    orbit(x, w, params).iter().map(|s| s.2).product()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloRecord {
    /// `nu^(n)(A)` from exact kernel iteration.
    pub exact: f64,
    /// Fraction of skew orbits started from `uniform x nu` ending in `A`.
    pub estimate: f64,
    pub stderr: f64,
}

impl MonteCarloRecord {
    /// Agreement within four standard errors. When the estimate has zero
    /// variance it has to match exactly.
    pub fn agrees(&self) -> bool {
        let diff = (self.exact - self.estimate).abs();
        diff == 0.0 || diff < 4.0 * self.stderr
    }
}

/// Compares `nu^(n)(A)` computed by exact iteration with a Monte Carlo average
/// of `1_A(x_n)` over skew orbits started at `(y, x)` with `y` uniform and `x`
/// drawn from `nu`.
pub fn skew_monte_carlo_check(
    nu: &AtomicMeasure,
    a: Interval,
    n: usize,
    samples: u64,
    seed: u64,
    params: &MapParams,
) -> Result<MonteCarloRecord> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    if a.is_empty() {
        return Ok(MonteCarloRecord {
            exact: 0.0,
            estimate: 0.0,
            stderr: 0.0,
        });
    }
    let mut ev = Evolver::new(nu.clone(), *params);
    for _ in 0..n {
        ev.advance()?;
    }
    let exact = ev.current().mass_in(a.lo, a.hi);

    let rng = CounterRng::new(seed);
    let cumulative = nu.cumulative();
    let hits: u64 = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut cursor = rng.stream(i, 0);
            let x = Angle::from_raw(nu.quantile(&cumulative, cursor.next_uniform()));
            let mut pt = SkewPoint {
                y: cursor.next_uniform(),
                x,
            };
            for _ in 0..n {
                pt = skew_step(pt, params);
            }
            u64::from(a.contains(pt.x.get()))
        })
        .sum();
    let estimate = hits as f64 / samples as f64;
    let stderr = (estimate * (1.0 - estimate) / samples as f64).sqrt();
    Ok(MonteCarloRecord {
        exact,
        estimate,
        stderr,
    })
}

/// Bin count per axis for the skew push-forward check.
pub const SKEW_CHECK_BINS: usize = 32;

/// Pushes `samples` points drawn from uniform `y` times sine-law `x` through
/// one skew step and checks the image histogram on a 32 x 32 grid against the
/// same product law.
pub fn skew_pushforward_check(
    samples: u64,
    seed: u64,
    params: &MapParams,
) -> Result<ProductHistogramCheck> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let rng = CounterRng::new(seed);
    let cells = SKEW_CHECK_BINS * SKEW_CHECK_BINS;
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; cells],
            |mut acc, i| {
                let mut cursor = rng.stream(i, 0);
                let y = cursor.next_uniform();
                let x = Angle::from_raw((1.0 - 2.0 * cursor.next_uniform()).acos());
                let q = skew_step(SkewPoint { y, x }, params);
                acc[product_cell(q.y, q.x.get(), SKEW_CHECK_BINS, SKEW_CHECK_BINS)] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(product_histogram_check(
        &counts,
        SKEW_CHECK_BINS,
        SKEW_CHECK_BINS,
        Z_THRESHOLD,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn params() -> MapParams {
        MapParams::new(0.5).unwrap()
    }

    fn ang(t: f64) -> Angle {
        Angle::new(t).unwrap()
    }

    fn word(s: &str) -> CylinderWord {
        s.parse().unwrap()
    }

    #[test]
    fn locate_examples() {
        let p = params();
        assert_eq!(
            locate_branch(SkewPoint::new(0.3, ang(0.2)).unwrap(), &p),
            Branch::One
        );
        assert_eq!(
            locate_branch(SkewPoint::new(0.51, Angle::HALF_PI).unwrap(), &p),
            Branch::Three
        );
        assert!(SkewPoint::new(1.0, Angle::HALF_PI).is_err());
    }

    #[test]
    fn step_examples() {
        let p = params();
        let q = skew_step(SkewPoint::new(0.4, ang(0.2)).unwrap(), &p);
        assert_eq!(q.y, 0.4);
        assert!((q.x.get() - 1.2).abs() < 1e-15);

        let q = skew_step(SkewPoint::new(0.75, Angle::HALF_PI).unwrap(), &p);
        assert!((q.y - 0.5).abs() < 1e-15);
        assert!((q.x.get() - (FRAC_PI_2 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn step_keeps_y_below_one() {
        let p = params();
        let y = 1.0 - f64::EPSILON / 2.0;
        for i in 0..=2000 {
            let x = ang(PI * i as f64 / 2000.0);
            let q = skew_step(SkewPoint::new(y, x).unwrap(), &p);
            assert!(q.y < 1.0);
        }
    }

    #[test]
    fn word_parsing() {
        assert_eq!(
            word("1,2,4").indices(),
            &[Branch::One, Branch::Two, Branch::Four]
        );
        assert_eq!(word("31").indices(), &[Branch::Three, Branch::One]);
        assert!("".parse::<CylinderWord>().is_err());
        assert!("1,5".parse::<CylinderWord>().is_err());
        assert!("1,x".parse::<CylinderWord>().is_err());
        assert_eq!(word("1,2").to_string(), "1,2");
        assert_eq!(CylinderWord::all_of_length(3).len(), 64);
    }

    #[test]
    fn fiber_examples() {
        let p = params();
        let f = cylinder_fiber(ang(0.2), &word("1"), &p);
        assert_eq!(f, FiberInterval { lo: 0.0, hi: 1.0 });
        assert_eq!(fiber_measure(ang(0.2), &word("1"), &p), 1.0);

        let f = cylinder_fiber(ang(0.2), &word("2"), &p);
        assert!(f.is_empty());
        assert_eq!(fiber_measure(ang(0.2), &word("2"), &p), 0.0);

        // (1,1) at pi/2: first branch 1 (slab [0, 0.5)), then branch 1 again at pi/2 + 1
        let f = cylinder_fiber(Angle::HALF_PI, &word("1,1"), &p);
        let p1 = p.prob(Branch::One, ang(FRAC_PI_2 + 1.0));
        assert!(f.lo >= 0.0 && f.hi <= 0.5);
        assert!((f.length() - 0.5 * p1).abs() < 1e-15);
        assert!((f.length() - fiber_measure(Angle::HALF_PI, &word("1,1"), &p)).abs() < 1e-15);
    }

    #[test]
    fn fiber_points_follow_the_word() {
        let p = params();
        for i in 1..40 {
            let x = ang(PI * i as f64 / 40.0 + 0.013);
            for w in CylinderWord::all_of_length(4) {
                let f = cylinder_fiber(x, &w, &p);
                if f.length() < 1e-9 {
                    continue;
                }
                let mut pt = SkewPoint::new(0.5 * (f.lo + f.hi), x).unwrap();
                for b in w.visit_order() {
                    assert_eq!(locate_branch(pt, &p), b);
                    pt = skew_step(pt, &p);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_dirac_example() {
        let p = params();
        let nu = AtomicMeasure::dirac(ang(0.2));
        let r = skew_monte_carlo_check(&nu, Interval::new(1.1, 1.3), 1, 1000, 5, &p).unwrap();
        assert_eq!(r.exact, 1.0);
        assert_eq!(r.estimate, 1.0);
        assert!(r.agrees());

        let r = skew_monte_carlo_check(&nu, Interval::new(1.3, 1.1), 1, 1000, 5, &p).unwrap();
        assert_eq!((r.exact, r.estimate, r.stderr), (0.0, 0.0, 0.0));
    }

    #[test]
    fn monte_carlo_zero_steps() {
        let p = params();
        let nu = AtomicMeasure::new(vec![(0.5, 0.3), (2.0, 0.7)]).unwrap();
        let r = skew_monte_carlo_check(&nu, Interval::new(0.0, 1.0), 0, 20_000, 1, &p).unwrap();
        assert!((r.exact - 0.3).abs() < 1e-15);
        assert!(r.agrees(), "{r:?}");
    }
}
