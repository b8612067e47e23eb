//! Exact evolution of atomic probability measures on `[0, pi]` under the
//! transition kernel, plus the binned diagnostics used to compare them with
//! the sine law `mu(A) = (1/2) * integral over A of sin`.
//!
//! The exit maps are affine, so the push-forward of a finite sum of point
//! masses is again a finite sum of point masses and can be computed without
//! discretising the dynamics. Binning only happens when a histogram is taken.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{Angle, MapParams};

/// Atoms closer than this are merged into one.
pub const MERGE_EPS: f64 = 1e-12;

/// Largest total-mass drift a kernel step may introduce.
pub const MASS_DRIFT_EPS: f64 = 1e-9;

/// Default refusal threshold for the support size of an evolved measure.
pub const DEFAULT_ATOM_CAP: usize = 10_000_000;

/// Cumulative distribution of the sine law: `(1 - cos theta) / 2`.
#[inline]
pub fn mu_cdf(theta: Angle) -> f64 {
    0.5 * (1.0 - theta.get().cos())
}

/// Sine-law mass of `[lo, hi]`, for `0 <= lo <= hi <= pi`.
#[inline]
pub fn mu_mass(lo: f64, hi: f64) -> f64 {
    0.5 * (lo.cos() - hi.cos())
}

/// Closed interval `[lo, hi]` of angles; empty when `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_nan() || self.hi.is_nan() || self.lo > self.hi
    }

    #[inline]
    pub fn contains(&self, theta: f64) -> bool {
        self.lo <= theta && theta <= self.hi
    }

    /// The `j`-th of `count` equal closed pieces of `[0, pi]`.
    pub fn dyadic(j: usize, count: usize) -> Self {
        Interval::new(bin_edge(j, count), bin_edge(j + 1, count))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub theta: f64,
    pub weight: f64,
}

/// A finitely supported probability measure on `[0, pi]`.
///
/// Atoms are sorted by angle, strictly separated by more than [`MERGE_EPS`],
/// and carry strictly positive weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    /// Builds a measure from `(theta, weight)` pairs whose weights already sum
    /// to one within `1e-12`.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let atoms = Self::validated(pairs)?;
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self::normalized(atoms, total))
    }

    /// Like [`AtomicMeasure::new`] but rescales the weights to total one.
    pub fn from_weights(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let atoms = Self::validated(pairs)?;
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "total weight {total} is not positive"
            )));
        }
        Ok(Self::normalized(atoms, total))
    }

    pub fn dirac(theta: Angle) -> Self {
        AtomicMeasure {
            atoms: vec![Atom {
                theta: theta.get(),
                weight: 1.0,
            }],
        }
    }

    fn validated(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Vec<Atom>> {
        let mut atoms = Vec::new();
        for (theta, weight) in pairs {
            let theta = Angle::new(theta)?.get();
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "atom at {theta} has non-positive weight {weight}"
                )));
            }
            atoms.push(Atom { theta, weight });
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        Ok(atoms)
    }

    fn normalized(mut atoms: Vec<Atom>, total: f64) -> Self {
        sort_and_merge(&mut atoms);
        for a in &mut atoms {
            a.weight /= total;
        }
        AtomicMeasure { atoms }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `nu([lo, hi])`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        let start = self.atoms.partition_point(|a| a.theta < lo);
        self.atoms[start..]
            .iter()
            .take_while(|a| a.theta <= hi)
            .map(|a| a.weight)
            .sum()
    }

    /// Cumulative weights, for inverse-CDF sampling.
    pub fn cumulative(&self) -> Vec<f64> {
        self.atoms
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.weight;
                Some(*acc)
            })
            .collect()
    }

    /// Angle of the atom selected by `u` in `[0, 1)` against `cumulative`.
    pub fn quantile(&self, cumulative: &[f64], u: f64) -> f64 {
        let i = cumulative.partition_point(|&c| c <= u);
        self.atoms[i.min(self.atoms.len() - 1)].theta
    }

    /// Total variation distance `sup_A |nu(A) - rho(A)|` between two atomic
    /// measures, matching atoms within [`MERGE_EPS`].
    pub fn tv_distance(&self, other: &AtomicMeasure) -> f64 {
        let (a, b) = (&self.atoms, &other.atoms);
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i].theta < b[j].theta - MERGE_EPS) {
                sum += a[i].weight;
                i += 1;
            } else if i == a.len() || b[j].theta < a[i].theta - MERGE_EPS {
                sum += b[j].weight;
                j += 1;
            } else {
                sum += (a[i].weight - b[j].weight).abs();
                i += 1;
                j += 1;
            }
        }
        0.5 * sum
    }
}

fn sort_and_merge(atoms: &mut Vec<Atom>) {
    atoms.sort_unstable_by(|x, y| x.theta.total_cmp(&y.theta));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    let mut anchor = f64::NEG_INFINITY;
    for a in atoms.drain(..) {
        match out.last_mut() {
            Some(last) if a.theta - anchor <= MERGE_EPS => last.weight += a.weight,
            _ => {
                anchor = a.theta;
                out.push(a);
            }
        }
    }
    *atoms = out;
}

/// Number of atoms `kernel_step` would create from `nu` before merging.
pub fn projected_support(nu: &AtomicMeasure, params: &MapParams) -> usize {
    nu.atoms
        .iter()
        .map(|a| {
            params
                .probs(Angle::from_raw(a.theta))
                .iter()
                .filter(|&&p| p > 0.0)
                .count()
        })
        .sum()
}

/// One application of the transition kernel: `nu'(A) = integral of K(theta, A) d nu`.
pub fn kernel_step(nu: &AtomicMeasure, params: &MapParams) -> AtomicMeasure {
    let mut next = Vec::with_capacity(nu.atoms.len() * 2);
    for a in &nu.atoms {
        for e in params.kernel_row(Angle::from_raw(a.theta)).entries {
            next.push(Atom {
                theta: e.image.get(),
                weight: a.weight * e.weight,
            });
        }
    }
    let total: f64 = next.iter().map(|a| a.weight).sum();
    assert!(
        (total - 1.0).abs() <= MASS_DRIFT_EPS,
        "kernel step drifted total mass to {total}"
    );
    sort_and_merge(&mut next);
    for a in &mut next {
        a.weight /= total;
    }
    AtomicMeasure { atoms: next }
}

/// Streaming version of [`evolve`] that keeps only the current measure.
#[derive(Clone, Debug)]
pub struct Evolver {
    params: MapParams,
    current: AtomicMeasure,
    step: usize,
    cap: usize,
}

impl Evolver {
    pub fn new(nu: AtomicMeasure, params: MapParams) -> Self {
        Evolver {
            params,
            current: nu,
            step: 0,
            cap: DEFAULT_ATOM_CAP,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn current(&self) -> &AtomicMeasure {
        &self.current
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn advance(&mut self) -> Result<&AtomicMeasure> {
        let projected = projected_support(&self.current, &self.params);
        if projected > self.cap {
            return Err(Error::AtomCapExceeded {
                projected,
                cap: self.cap,
            });
        }
        self.current = kernel_step(&self.current, &self.params);
        self.step += 1;
        Ok(&self.current)
    }
}

/// `[nu, K nu, ..., K^n nu]`.
pub fn evolve(nu: &AtomicMeasure, n: usize, params: &MapParams) -> Result<Vec<AtomicMeasure>> {
    evolve_with_cap(nu, n, params, DEFAULT_ATOM_CAP)
}

pub fn evolve_with_cap(
    nu: &AtomicMeasure,
    n: usize,
    params: &MapParams,
    cap: usize,
) -> Result<Vec<AtomicMeasure>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(nu.clone());
    let mut ev = Evolver::new(nu.clone(), *params).with_cap(cap);
    for _ in 0..n {
        out.push(ev.advance()?.clone());
    }
    Ok(out)
}

/// Uniform mixture `(1/n) sum nu_i`.
pub fn cesaro(nus: &[AtomicMeasure]) -> Result<AtomicMeasure> {
    if nus.is_empty() {
        return Err(Error::InvalidMeasure(
            "Cesaro average of an empty list".into(),
        ));
    }
    let scale = 1.0 / nus.len() as f64;
    let mut atoms: Vec<Atom> = nus
        .iter()
        .flat_map(|nu| nu.atoms.iter())
        .map(|a| Atom {
            theta: a.theta,
            weight: a.weight * scale,
        })
        .collect();
    sort_and_merge(&mut atoms);
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    for a in &mut atoms {
        a.weight /= total;
    }
    Ok(AtomicMeasure { atoms })
}

/// Mass over equal-width bins `[j pi/m, (j+1) pi/m)` of `[0, pi]`; the last bin
/// also holds `pi` itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    masses: Vec<f64>,
}

impl Histogram {
    /// Sums `(theta, weight)` pairs into `bins` bins. A point on an interior
    /// edge lands in the bin to its right.
    pub fn from_points(points: impl IntoIterator<Item = (f64, f64)>, bins: usize) -> Self {
        assert!(bins >= 1, "histogram needs at least one bin");
        let mut masses = vec![0.0; bins];
        for (theta, w) in points {
            masses[bin_index(theta, bins)] += w;
        }
        Histogram { masses }
    }

    pub fn of_measure(nu: &AtomicMeasure, bins: usize) -> Self {
        Self::from_points(nu.atoms.iter().map(|a| (a.theta, a.weight)), bins)
    }

    /// Empirical histogram of equally weighted angles.
    pub fn of_angles(thetas: &[f64], bins: usize) -> Self {
        let w = 1.0 / thetas.len() as f64;
        Self::from_points(thetas.iter().map(|&t| (t, w)), bins)
    }

    /// Exact sine-law bin masses.
    pub fn mu(bins: usize) -> Self {
        assert!(bins >= 1, "histogram needs at least one bin");
        let masses = (0..bins)
            .map(|j| mu_mass(bin_edge(j, bins), bin_edge(j + 1, bins)))
            .collect();
        Histogram { masses }
    }

    /// Builds a histogram from given masses, which must sum to one within `1e-9`.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidMeasure(
                "histogram needs at least one bin".into(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 || masses.iter().any(|&m| m < 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "histogram masses sum to {total}"
            )));
        }
        Ok(Histogram { masses })
    }

    pub fn bin_count(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn bin_bounds(&self, j: usize) -> (f64, f64) {
        let m = self.masses.len();
        (bin_edge(j, m), bin_edge(j + 1, m))
    }

    /// Componentwise mean of histograms with equal bin counts.
    pub fn average(hs: &[Histogram]) -> Option<Histogram> {
        let first = hs.first()?;
        let m = first.bin_count();
        let mut masses = vec![0.0; m];
        for h in hs {
            assert_eq!(h.bin_count(), m, "bin count mismatch");
            for (acc, &v) in masses.iter_mut().zip(&h.masses) {
                *acc += v;
            }
        }
        let n = hs.len() as f64;
        masses.iter_mut().for_each(|v| *v /= n);
        Some(Histogram { masses })
    }
}

/// Left edge of bin `j` out of `bins`; `bin_edge(bins, bins) == pi`.
#[inline]
pub fn bin_edge(j: usize, bins: usize) -> f64 {
    if j == bins {
        PI
    } else {
        j as f64 * PI / bins as f64
    }
}

#[inline]
pub fn bin_index(theta: f64, bins: usize) -> usize {
    let mut j = ((theta / PI) * bins as f64).floor().max(0.0) as usize;
    j = j.min(bins - 1);
    // settle rounding against the same edges `bin_edge` reports
    while j + 1 < bins && theta >= bin_edge(j + 1, bins) {
        j += 1;
    }
    while j > 0 && theta < bin_edge(j, bins) {
        j -= 1;
    }
    j
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Distances {
    pub tv: f64,
    pub ks: f64,
}

/// Binned total variation and Kolmogorov-Smirnov distances to the sine law.
pub fn distance_to_mu(h: &Histogram) -> Distances {
    let bins = h.bin_count();
    let mut tv = 0.0;
    let mut ks: f64 = 0.0;
    let mut cum = 0.0;
    for (j, &m) in h.masses.iter().enumerate() {
        let (lo, hi) = (bin_edge(j, bins), bin_edge(j + 1, bins));
        tv += (m - mu_mass(lo, hi)).abs();
        cum += m;
        ks = ks.max((cum - mu_cdf(Angle::from_raw(hi))).abs());
    }
    Distances { tv: 0.5 * tv, ks }
}

/// A nonnegative density on `[0, pi]`, described by how much mass it puts on
/// a subinterval.
pub trait Density {
    fn mass(&self, lo: f64, hi: f64) -> f64;
}

/// Constant density.
#[derive(Clone, Copy, Debug, Default)]
pub struct Uniform;

impl Density for Uniform {
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        hi - lo
    }
}

/// `sin(theta) / 2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SineLaw;

impl Density for SineLaw {
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        mu_mass(lo, hi)
    }
}

/// Step function given as `(lo, hi, value)` pieces; zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    pieces: Vec<(f64, f64, f64)>,
}

impl PiecewiseConstant {
    pub fn new(pieces: Vec<(f64, f64, f64)>) -> Result<Self> {
        for &(lo, hi, v) in &pieces {
            if !(0.0 <= lo && lo <= hi && hi <= PI + 1e-12) {
                return Err(Error::InvalidDensity(format!(
                    "piece [{lo}, {hi}) not inside [0, pi]"
                )));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidDensity(format!(
                    "negative or non-finite value {v}"
                )));
            }
        }
        Ok(PiecewiseConstant { pieces })
    }

    /// Two bumps of unequal height: 2 on `[pi/8, 3pi/8)` and 1 on
    /// `[5pi/8, 7pi/8)`. A stand-in for an arbitrary, non-symmetric start.
    pub fn two_bump() -> Self {
        PiecewiseConstant {
            pieces: vec![
                (PI / 8.0, 3.0 * PI / 8.0, 2.0),
                (5.0 * PI / 8.0, 7.0 * PI / 8.0, 1.0),
            ],
        }
    }

    pub fn pieces(&self) -> &[(f64, f64, f64)] {
        &self.pieces
    }
}

impl Density for PiecewiseConstant {
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        self.pieces
            .iter()
            .map(|&(a, b, v)| v * (hi.min(b) - lo.max(a)).max(0.0))
            .sum()
    }
}

/// Arbitrary pointwise density, integrated by the midpoint rule.
pub struct Pointwise<F>(pub F);

impl<F: Fn(f64) -> f64> Density for Pointwise<F> {
    fn mass(&self, lo: f64, hi: f64) -> f64 {
        (self.0)(0.5 * (lo + hi)) * (hi - lo)
    }
}

/// Discretises a density into atoms: each of the `bins` equal bins is split
/// into `atoms_per_bin` cells, and each cell contributes one atom at its
/// midpoint carrying the cell's mass. Cells with no mass are dropped.
pub fn atomize_density<D: Density + ?Sized>(
    density: &D,
    atoms_per_bin: usize,
    bins: usize,
) -> Result<AtomicMeasure> {
    if bins == 0 || atoms_per_bin == 0 {
        return Err(Error::InvalidArgument(
            "bins and atoms_per_bin must be positive".into(),
        ));
    }
    let cells = bins * atoms_per_bin;
    let mut pairs = Vec::with_capacity(cells);
    for c in 0..cells {
        let (lo, hi) = (bin_edge(c, cells), bin_edge(c + 1, cells));
        let m = density.mass(lo, hi);
        if m < 0.0 || !m.is_finite() {
            return Err(Error::InvalidDensity(format!("mass {m} on [{lo}, {hi})")));
        }
        if m > 0.0 {
            pairs.push((0.5 * (lo + hi), m));
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidDensity("zero total mass".into()));
    }
    AtomicMeasure::from_weights(pairs)
}
