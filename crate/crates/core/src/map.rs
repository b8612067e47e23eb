//! The four-branch random map on outgoing angles.
//!
//! A particle leaving the cell with angle `theta` (measured from the open side,
//! so `theta` lies in `[0, pi]`) comes back out along one of four affine images
//! of `theta`. Which image is taken is random, with probabilities that are
//! piecewise functions of `theta` over seven regions bounded by multiples of
//! `alpha`.

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Excursion allowed for angles that should lie in `[0, pi]` but carry
/// floating-point noise.
pub const ANGLE_EPS: f64 = 1e-12;

/// Slack on probabilities before clamping, and on the partition of unity.
pub const PROB_EPS: f64 = 1e-12;

/// An angle in `[0, pi]`, measured from the open side of the cell.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);
    pub const HALF_PI: Angle = Angle(std::f64::consts::FRAC_PI_2);
    pub const PI: Angle = Angle(PI);

    pub fn new(theta: f64) -> Result<Self> {
        if (0.0..=PI).contains(&theta) {
            Ok(Angle(theta))
        } else {
            Err(Error::AngleOutOfRange(theta))
        }
    }

    /// Accepts `theta` within [`ANGLE_EPS`] of `[0, pi]` and clamps it into range.
    pub fn snapped(theta: f64) -> Result<Self> {
        if (-ANGLE_EPS..=PI + ANGLE_EPS).contains(&theta) {
            Ok(Angle(theta.clamp(0.0, PI)))
        } else {
            Err(Error::AngleOutOfRange(theta))
        }
    }

    /// For values already known to lie in `[0, pi]`.
    #[inline]
    pub(crate) fn from_raw(theta: f64) -> Self {
        debug_assert!((0.0..=PI).contains(&theta), "angle {theta} out of range");
        Angle(theta)
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One of the four exit branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    One,
    Two,
    Three,
    Four,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::One, Branch::Two, Branch::Three, Branch::Four];

    /// Zero-based position, for indexing `[_; 4]` arrays.
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based label as used in tables and on the command line.
    #[inline]
    pub fn number(self) -> u32 {
        self as u32 + 1
    }

    #[inline]
    pub fn from_index(i: usize) -> Branch {
        Branch::ALL[i]
    }

    /// The branch paired with `self` under the reflection `theta -> pi - theta`:
    /// 1 and 3 swap, 2 and 4 swap.
    pub fn conjugate(self) -> Branch {
        match self {
            Branch::One => Branch::Three,
            Branch::Two => Branch::Four,
            Branch::Three => Branch::One,
            Branch::Four => Branch::Two,
        }
    }
}

impl TryFrom<u32> for Branch {
    type Error = Error;

    fn try_from(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Branch::One),
            2 => Ok(Branch::Two),
            3 => Ok(Branch::Three),
            4 => Ok(Branch::Four),
            _ => Err(Error::InvalidBranch(k)),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl Serialize for Branch {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.number())
    }
}

/// Which tangent enters `u`: `tan(alpha)` or `tan(2 alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slope {
    Alpha,
    TwoAlpha,
}

/// The seven half-open intervals on which the probabilities have a fixed
/// closed form. The last one is closed on the right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `[0, a)`
    Grazing,
    /// `[a, 2a)`
    Low,
    /// `[2a, 3a)`
    LowMid,
    /// `[3a, pi - 3a)`
    Central,
    /// `[pi - 3a, pi - 2a)`
    HighMid,
    /// `[pi - 2a, pi - a)`
    High,
    /// `[pi - a, pi]`
    Backward,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Grazing => "[0,a)",
            Region::Low => "[a,2a)",
            Region::LowMid => "[2a,3a)",
            Region::Central => "[3a,pi-3a)",
            Region::HighMid => "[pi-3a,pi-2a)",
            Region::High => "[pi-2a,pi-a)",
            Region::Backward => "[pi-a,pi]",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Cell angle and the trigonometric constants the probabilities need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapParams {
    alpha: f64,
    tan_alpha: f64,
    tan_2alpha: f64,
    cos_2alpha: f64,
}

impl MapParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < PI / 6.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(MapParams {
            alpha,
            tan_alpha: alpha.tan(),
            tan_2alpha: (2.0 * alpha).tan(),
            cos_2alpha: (2.0 * alpha).cos(),
        })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tan_alpha(&self) -> f64 {
        self.tan_alpha
    }

    pub fn tan_2alpha(&self) -> f64 {
        self.tan_2alpha
    }

    pub fn cos_2alpha(&self) -> f64 {
        self.cos_2alpha
    }

    /// Interior region boundaries in increasing order:
    /// `a, 2a, 3a, pi - 3a, pi - 2a, pi - a`.
    pub fn breakpoints(&self) -> [f64; 6] {
        let a = self.alpha;
        [a, 2.0 * a, 3.0 * a, PI - 3.0 * a, PI - 2.0 * a, PI - a]
    }

    pub fn region(&self, theta: Angle) -> Region {
        let t = theta.get();
        let [b1, b2, b3, b4, b5, b6] = self.breakpoints();
        if t < b1 {
            Region::Grazing
        } else if t < b2 {
            Region::Low
        } else if t < b3 {
            Region::LowMid
        } else if t < b4 {
            Region::Central
        } else if t < b5 {
            Region::HighMid
        } else if t < b6 {
            Region::High
        } else {
            Region::Backward
        }
    }

    /// Affine exit map of branch `b`. The image may leave `[0, pi]` where the
    /// branch has probability zero.
    #[inline]
    pub fn tau(&self, b: Branch, theta: Angle) -> f64 {
        self.tau_affine(b, theta.get())
    }

    /// The same affine formula, extended to every real `t`. Useful for
    /// composing branches whose intermediate images leave `[0, pi]`.
    #[inline]
    pub fn tau_affine(&self, b: Branch, t: f64) -> f64 {
        let a = self.alpha;
        match b {
            Branch::One => t + 2.0 * a,
            Branch::Two => -t + 2.0 * PI - 4.0 * a,
            Branch::Three => t - 2.0 * a,
            Branch::Four => -t + 4.0 * a,
        }
    }

    /// `u(theta) = (1 + tan(a) cot(theta)) / 2` with `a` either `alpha` or
    /// `2 alpha`. Negative `theta` is allowed, giving `u(-theta)` as used by
    /// branches 3 and 4.
    pub fn u(&self, theta: f64, slope: Slope) -> Result<f64> {
        if !(-PI..=PI).contains(&theta) {
            return Err(Error::AngleOutOfRange(theta));
        }
        if theta == 0.0 || theta.abs() == PI {
            return Err(Error::CotangentUndefined(theta));
        }
        Ok(self.u_unchecked(theta, slope))
    }

    #[inline]
    fn u_unchecked(&self, theta: f64, slope: Slope) -> f64 {
        let t = match slope {
            Slope::Alpha => self.tan_alpha,
            Slope::TwoAlpha => self.tan_2alpha,
        };
        let (s, c) = theta.sin_cos();
        0.5 * (1.0 + t * c / s)
    }

    /// Unclamped probabilities straight from the piecewise table.
    pub fn raw_probs(&self, theta: Angle) -> [f64; 4] {
        let t = theta.get();
        let two_cos = 2.0 * self.cos_2alpha;
        let ua = |x| self.u_unchecked(x, Slope::Alpha);
        let u2a = |x| self.u_unchecked(x, Slope::TwoAlpha);
        match self.region(theta) {
            Region::Grazing => [1.0, 0.0, 0.0, 0.0],
            Region::Low => [ua(t), 0.0, 0.0, ua(-t)],
            Region::LowMid => {
                let q = two_cos * u2a(-t);
                [ua(t), 0.0, q, ua(-t) - q]
            }
            Region::Central => [ua(t), 0.0, ua(-t), 0.0],
            Region::HighMid => {
                let q = two_cos * u2a(t);
                [q, ua(t) - q, ua(-t), 0.0]
            }
            Region::High => [0.0, ua(t), ua(-t), 0.0],
            Region::Backward => [0.0, 0.0, 1.0, 0.0],
        }
    }

    /// All four branch probabilities at `theta`.
    ///
    /// Values within [`PROB_EPS`] outside `[0, 1]` are clamped; anything
    /// further out means the table is wrong and panics.
    pub fn probs(&self, theta: Angle) -> [f64; 4] {
        let mut p = self.raw_probs(theta);
        for (k, v) in p.iter_mut().enumerate() {
            assert!(
                *v >= -PROB_EPS && *v <= 1.0 + PROB_EPS,
                "p{}({}) = {} out of range at alpha = {}",
                k + 1,
                theta,
                v,
                self.alpha
            );
            *v = v.clamp(0.0, 1.0);
        }
        p
    }

    #[inline]
    pub fn prob(&self, b: Branch, theta: Angle) -> f64 {
        self.probs(theta)[b.index()]
    }

    /// The `[lo, hi)` slab of `[0, 1)` owned by each branch at `theta`.
    ///
    /// Slabs are laid out in branch order by cumulative probability. The last
    /// branch with positive probability is stretched to end exactly at 1 so
    /// that rounding in the cumulative sum never leaves a gap.
    pub fn slabs(&self, theta: Angle) -> ([f64; 4], [(f64, f64); 4]) {
        let p = self.probs(theta);
        let mut slabs = [(0.0, 0.0); 4];
        let mut acc = 0.0;
        let mut last = 0;
        for k in 0..4 {
            let lo = acc;
            if p[k] > 0.0 {
                acc += p[k];
                last = k;
            }
            slabs[k] = (lo, acc);
        }
        slabs[last].1 = 1.0;
        for s in slabs.iter_mut().skip(last + 1) {
            *s = (1.0, 1.0);
        }
        (p, slabs)
    }

    /// Picks the branch whose slab contains `u`. This is the same rule that
    /// partitions the skew-product base, so sampling and skew dynamics agree.
    pub fn sample_branch(&self, theta: Angle, u: f64) -> Branch {
        debug_assert!((0.0..1.0).contains(&u), "u = {u} not in [0, 1)");
        let (p, slabs) = self.slabs(theta);
        let mut chosen = None;
        for k in 0..4 {
            if p[k] > 0.0 {
                chosen = Some(k);
                if u < slabs[k].1 {
                    break;
                }
            }
        }
        Branch::from_index(chosen.expect("probabilities sum to one"))
    }

    /// Transition kernel at `theta`: every branch with positive weight, with
    /// its image angle.
    pub fn kernel_row(&self, theta: Angle) -> KernelRow {
        let p = self.probs(theta);
        let total: f64 = p.iter().sum();
        assert!(
            (total - 1.0).abs() < PROB_EPS,
            "partition of unity fails at theta = {theta}: sum = {total}"
        );
        let entries = Branch::ALL
            .iter()
            .filter(|b| p[b.index()] > 0.0)
            .map(|&b| {
                let raw = self.tau(b, theta);
                let image = Angle::snapped(raw).unwrap_or_else(|_| {
                    panic!(
                        "branch {b} has weight {} but image {raw} leaves [0, pi]",
                        p[b.index()]
                    )
                });
                KernelEntry {
                    branch: b,
                    weight: p[b.index()],
                    image,
                }
            })
            .collect();
        KernelRow { entries }
    }

    /// Smallest `k >= 1` with `(4k + 6) a > pi`, and the rotation angle
    /// `(4k + 6) a - pi`.
    pub fn rotation_beta(&self) -> (u32, f64) {
        let mut k = 1u32;
        while f64::from(4 * k + 6) * self.alpha <= PI {
            k += 1;
        }
        (k, f64::from(4 * k + 6) * self.alpha - PI)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelEntry {
    pub branch: Branch,
    pub weight: f64,
    pub image: Angle,
}

/// The kernel row `K(theta, .)` as a list of weighted images.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelRow {
    pub entries: Vec<KernelEntry>,
}

impl KernelRow {
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// `K(theta, [lo, hi])`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        self.entries
            .iter()
            .filter(|e| (lo..=hi).contains(&e.image.get()))
            .map(|e| e.weight)
            .sum()
    }
}

/// `theta -> pi - theta`.
#[inline]
pub fn reflect_sym(theta: Angle) -> Angle {
    Angle(PI - theta.get())
}
