//! Deterministic ray tracer for the open triangular cell.
//!
//! The cell has its open side on `p = (0, 0)`, `q = (1, 0)` and its apex at
//! `(1/2, tan(alpha) / 2)`, so both base angles equal `alpha`. A particle
//! enters at `(x, 0)` with direction `(cos theta, sin theta)`, reflects
//! specularly off the two slanted walls, and is read off when it crosses the
//! open side again. The exit angle is that of the velocity mirrored in the
//! open side, which is the angle it enters the facing cell with.
//!
//! With the entry point uniform on the open side, the distribution of exit
//! angles is the transition kernel, which makes this an independent check of
//! the closed-form branch probabilities.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{Angle, Branch, MapParams, Region};
use crate::rng::{CounterRng, StreamCursor};
use crate::stats::{binomial_z, product_cell, product_histogram_check, ProductHistogramCheck};

/// A hit closer than this to a vertex counts as a corner hit.
pub const CORNER_EPS: f64 = 1e-12;

/// Tolerance for matching an exit angle to a branch image.
pub const BRANCH_MATCH_EPS: f64 = 1e-9;

/// Allowed fraction of exits that match no branch.
pub const UNCLASSIFIED_ALLOWANCE: f64 = 1e-6;

/// z-score below which a validation point or histogram cell passes.
pub const Z_THRESHOLD: f64 = 4.0;

type Vec2 = (f64, f64);

#[inline]
fn sub(a: Vec2, b: Vec2) -> Vec2 {
    (a.0 - b.0, a.1 - b.1)
}

#[inline]
fn dot(a: Vec2, b: Vec2) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

#[inline]
fn cross(a: Vec2, b: Vec2) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

#[inline]
fn dist(a: Vec2, b: Vec2) -> f64 {
    let d = sub(a, b);
    dot(d, d).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Open,
    Left,
    Right,
}

/// Isosceles triangle with base angles `alpha` and an open base.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGeometry {
    params: MapParams,
    apex: Vec2,
}

impl CellGeometry {
    pub fn new(alpha: f64) -> Result<Self> {
        let params = MapParams::new(alpha)?;
        Ok(Self::from_params(params))
    }

    pub fn from_params(params: MapParams) -> Self {
        CellGeometry {
            params,
            apex: (0.5, 0.5 * params.tan_alpha()),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha()
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn vertices(&self) -> [Vec2; 3] {
        [(0.0, 0.0), (1.0, 0.0), self.apex]
    }

    /// `10 * ceil(pi / alpha)`.
    pub fn max_bounces(&self) -> u32 {
        10 * (PI / self.alpha()).ceil() as u32
    }

    fn segment(&self, e: Edge) -> (Vec2, Vec2) {
        match e {
            Edge::Open => ((0.0, 0.0), (1.0, 0.0)),
            Edge::Left => ((0.0, 0.0), self.apex),
            Edge::Right => ((1.0, 0.0), self.apex),
        }
    }

    /// Unit normal of a slanted wall.
    pub fn wall_normal(&self, e: Edge) -> Vec2 {
        let (s, c) = self.alpha().sin_cos();
        match e {
            Edge::Left => (s, -c),
            Edge::Right => (-s, -c),
            Edge::Open => (0.0, 1.0),
        }
    }
}

/// One specular reflection, as recorded by [`trace`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounce {
    pub wall: Edge,
    pub point: Vec2,
    pub incoming: Vec2,
    pub outgoing: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReturnRecord {
    pub exit_x: f64,
    pub theta_out: Angle,
    pub bounce_count: u32,
    /// The branch whose image of the entry angle equals `theta_out`.
    pub branch_matched: Option<Branch>,
}

/// Branch `k` with `|theta_out - tau_k(theta_in)| < BRANCH_MATCH_EPS`, nearest first.
pub fn classify(theta_in: Angle, theta_out: f64, params: &MapParams) -> Option<Branch> {
    Branch::ALL
        .into_iter()
        .map(|b| (b, (params.tau(b, theta_in) - theta_out).abs()))
        .filter(|&(_, d)| d < BRANCH_MATCH_EPS)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(b, _)| b)
}

/// Follows the particle from entry to exit, calling `on_bounce` at every
/// reflection.
pub fn trace(
    x: f64,
    theta_in: Angle,
    geom: &CellGeometry,
    mut on_bounce: impl FnMut(Bounce),
) -> Result<ReturnRecord> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "entry point {x} not in (0, 1)"
        )));
    }
    let t_in = theta_in.get();
    if !(t_in > 0.0 && t_in < PI) {
        return Err(Error::InvalidArgument(format!(
            "entry angle {t_in} not in (0, pi)"
        )));
    }
    let vertices = geom.vertices();
    let mut pos: Vec2 = (x, 0.0);
    let mut dir: Vec2 = (t_in.cos(), t_in.sin());
    let mut last = Edge::Open;
    let mut bounces = 0u32;
    let max = geom.max_bounces();

    loop {
        let mut best: Option<(f64, Edge)> = None;
        for e in [Edge::Open, Edge::Left, Edge::Right] {
            if e == last || (e == Edge::Open && dir.1 >= 0.0) {
                continue;
            }
            let (a, b) = geom.segment(e);
            let seg = sub(b, a);
            let denom = cross(dir, seg);
            if denom == 0.0 {
                continue;
            }
            let ap = sub(a, pos);
            let t = cross(ap, seg) / denom;
            let s = cross(ap, dir) / denom;
            if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, e));
            }
        }
        let (t, edge) = best.expect("a ray inside a closed triangle always meets an edge");
        let hit = (pos.0 + t * dir.0, pos.1 + t * dir.1);
        if vertices.iter().any(|&v| dist(hit, v) < CORNER_EPS) {
            return Err(Error::CornerHit(hit.0, hit.1));
        }
        if edge == Edge::Open {
            let exit_x = hit.0.clamp(0.0, 1.0);
            let theta_out = Angle::snapped((-dir.1).atan2(dir.0))?;
            return Ok(ReturnRecord {
                exit_x,
                theta_out,
                bounce_count: bounces,
                branch_matched: classify(theta_in, theta_out.get(), geom.params()),
            });
        }
        let n = geom.wall_normal(edge);
        let k = 2.0 * dot(dir, n);
        let out = (dir.0 - k * n.0, dir.1 - k * n.1);
        on_bounce(Bounce {
            wall: edge,
            point: hit,
            incoming: dir,
            outgoing: out,
        });
        bounces += 1;
        if bounces > max {
            return Err(Error::TracerStuck(max));
        }
        pos = hit;
        dir = out;
        last = edge;
    }
}

/// First return to the open side of a particle entering at `(x, 0)`.
pub fn first_return(x: f64, theta_in: Angle, geom: &CellGeometry) -> Result<ReturnRecord> {
    trace(x, theta_in, geom, |_| {})
}

/// Draws entry points from `cursor` until a trajectory avoids every corner.
fn first_return_redrawing(
    cursor: &mut StreamCursor,
    theta_in: Angle,
    geom: &CellGeometry,
) -> Result<ReturnRecord> {
    loop {
        let x = cursor.next_uniform();
        if x == 0.0 {
            continue;
        }
        match first_return(x, theta_in, geom) {
            Err(Error::CornerHit(..)) => continue,
            other => return other,
        }
    }
}

/// Exit-branch tallies from uniformly drawn entry points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchFrequencies {
    pub samples: u64,
    pub counts: [u64; 4],
    pub unclassified: u64,
}

impl BranchFrequencies {
    pub fn frequency(&self, b: Branch) -> f64 {
        self.counts[b.index()] as f64 / self.samples as f64
    }

    pub fn frequencies(&self) -> [f64; 4] {
        Branch::ALL.map(|b| self.frequency(b))
    }

    pub fn unclassified_fraction(&self) -> f64 {
        self.unclassified as f64 / self.samples as f64
    }
}

fn tally(
    theta_in: Angle,
    samples: u64,
    rng: CounterRng,
    stream_base: u64,
    geom: &CellGeometry,
) -> Result<BranchFrequencies> {
    let counts = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<[u64; 5]> {
            let mut cursor = rng.stream(stream_base + i, 0);
            let rec = first_return_redrawing(&mut cursor, theta_in, geom)?;
            let mut c = [0u64; 5];
            match rec.branch_matched {
                Some(b) => c[b.index()] = 1,
                None => c[4] = 1,
            }
            Ok(c)
        })
        .try_reduce(
            || [0u64; 5],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    Ok(BranchFrequencies {
        samples,
        counts: [counts[0], counts[1], counts[2], counts[3]],
        unclassified: counts[4],
    })
}

/// Branch frequencies of the exit angle for a fixed entry angle.
///
/// Fails with [`Error::BranchMismatch`] when more than
/// [`UNCLASSIFIED_ALLOWANCE`] of the exits match no branch image.
pub fn empirical_kernel(
    theta_in: Angle,
    samples: u64,
    seed: u64,
    geom: &CellGeometry,
) -> Result<BranchFrequencies> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let f = tally(theta_in, samples, CounterRng::new(seed), 0, geom)?;
    if f.unclassified_fraction() > UNCLASSIFIED_ALLOWANCE {
        return Err(Error::BranchMismatch {
            unclassified: f.unclassified,
            samples,
        });
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointValidation {
    pub theta: f64,
    pub region: Region,
    pub probabilities: [f64; 4],
    pub frequencies: [f64; 4],
    pub z_scores: [f64; 4],
    pub max_abs_dev: f64,
    pub max_z: f64,
    pub unclassified: u64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub alpha: f64,
    pub samples_per_point: u64,
    pub seed: u64,
    pub z_threshold: f64,
    pub points: Vec<PointValidation>,
    pub max_z: f64,
    pub total_unclassified: u64,
    pub passed: bool,
}

/// `n` angles at the centres of `n` equal cells of `[0, pi]`, each moved at
/// least `1e-6` away from the region boundaries.
pub fn default_grid(n: usize, params: &MapParams) -> Vec<Angle> {
    let bps = params.breakpoints();
    (0..n)
        .map(|j| {
            let mut t = (j as f64 + 0.5) * PI / n as f64;
            for &b in &bps {
                if (t - b).abs() < 1e-6 {
                    t = b + 1e-6;
                }
            }
            Angle::new(t).expect("grid point in range")
        })
        .collect()
}

/// Compares traced branch frequencies with the closed-form probabilities at
/// every grid angle. A point passes when every branch z-score is below
/// [`Z_THRESHOLD`] and no exit went unclassified.
pub fn validate_kernel_table(
    grid: &[Angle],
    samples: u64,
    seed: u64,
    geom: &CellGeometry,
) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let params = geom.params();
    let rng = CounterRng::new(seed);
    let mut points = Vec::with_capacity(grid.len());
    for (j, &theta) in grid.iter().enumerate() {
        let f = tally(theta, samples, rng, j as u64 * samples, geom)?;
        let probs = params.probs(theta);
        let freqs = f.frequencies();
        let z_scores: [f64; 4] = std::array::from_fn(|k| binomial_z(freqs[k], probs[k], samples));
        let max_abs_dev = (0..4)
            .map(|k| (freqs[k] - probs[k]).abs())
            .fold(0.0, f64::max);
        let max_z = z_scores.iter().copied().fold(0.0, f64::max);
        points.push(PointValidation {
            theta: theta.get(),
            region: params.region(theta),
            probabilities: probs,
            frequencies: freqs,
            z_scores,
            max_abs_dev,
            max_z,
            unclassified: f.unclassified,
            passed: max_z < Z_THRESHOLD && f.unclassified == 0,
        });
    }
    let max_z = points.iter().map(|p| p.max_z).fold(0.0, f64::max);
    let total_unclassified = points.iter().map(|p| p.unclassified).sum();
    let passed = points.iter().all(|p| p.passed);
    Ok(ValidationReport {
        alpha: geom.alpha(),
        samples_per_point: samples,
        seed,
        z_threshold: Z_THRESHOLD,
        points,
        max_z,
        total_unclassified,
        passed,
    })
}

/// Bin count per axis for the Liouville check.
pub const LIOUVILLE_BINS: usize = 16;

/// Pushes `samples` entries drawn from uniform position times sine-law angle
/// through the first-return map and checks that the exits follow the same
/// law on a 16 x 16 grid.
pub fn liouville_pushforward_check(
    samples: u64,
    seed: u64,
    geom: &CellGeometry,
) -> Result<ProductHistogramCheck> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let rng = CounterRng::new(seed);
    let cells = LIOUVILLE_BINS * LIOUVILLE_BINS;
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || Ok(vec![0u64; cells]),
            |acc: Result<Vec<u64>>, i| {
                let mut acc = acc?;
                let mut cursor = rng.stream(i, 0);
                let rec = loop {
                    let x = cursor.next_uniform();
                    let theta = (1.0 - 2.0 * cursor.next_uniform()).acos();
                    if x == 0.0 || theta == 0.0 || theta >= PI {
                        continue;
                    }
                    match first_return(x, Angle::from_raw(theta), geom) {
                        Err(Error::CornerHit(..)) => continue,
                        other => break other?,
                    }
                };
                acc[product_cell(
                    rec.exit_x,
                    rec.theta_out.get(),
                    LIOUVILLE_BINS,
                    LIOUVILLE_BINS,
                )] += 1;
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![0u64; cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    Ok(product_histogram_check(
        &counts,
        LIOUVILLE_BINS,
        LIOUVILLE_BINS,
        Z_THRESHOLD,
    ))
}
