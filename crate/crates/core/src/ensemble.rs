//! Monte Carlo particle ensembles.
//!
//! Each particle carries only its angle. At step `s` particle `j` reads the
//! uniform at `(seed, stream = j, index = s)` and moves along the branch whose
//! slab contains it, so trajectories do not depend on thread count or
//! scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::map::{Angle, MapParams};
use crate::measure::{AtomicMeasure, Histogram};
use crate::rng::CounterRng;

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    thetas: Vec<f64>,
    rng: CounterRng,
    step_count: u64,
}

impl ParticleEnsemble {
    pub fn from_thetas(thetas: Vec<f64>, seed: u64) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one particle".into(),
            ));
        }
        for &t in &thetas {
            Angle::new(t)?;
        }
        Ok(ParticleEnsemble {
            thetas,
            rng: CounterRng::new(seed),
            step_count: 0,
        })
    }

    /// Places `count` particles on the atoms of `nu`, in proportion to the
    /// atom weights. Counts are rounded by largest remainder so they sum to
    /// `count` exactly.
    pub fn from_measure(nu: &AtomicMeasure, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one particle".into(),
            ));
        }
        let quotas: Vec<f64> = nu.atoms().iter().map(|a| a.weight * count as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        // largest fractional part first, ties to the lower index
        order.sort_by(|&i, &j| {
            let (fi, fj) = (quotas[i] - quotas[i].floor(), quotas[j] - quotas[j].floor());
            fj.total_cmp(&fi).then(i.cmp(&j))
        });
        for &i in order.iter().take(count.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        let mut thetas = Vec::with_capacity(count);
        for (a, &c) in nu.atoms().iter().zip(&counts) {
            thetas.extend(std::iter::repeat_n(a.theta, c));
        }
        Self::from_thetas(thetas, seed)
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Advances every particle by one application of the random map.
    pub fn step(&self, params: &MapParams) -> ParticleEnsemble {
        let mut next = self.clone();
        next.step_in_place(params);
        next
    }

    pub fn step_in_place(&mut self, params: &MapParams) {
        let rng = self.rng;
        let step = self.step_count;
        self.thetas
            .par_iter_mut()
            .enumerate()
            .for_each(|(j, theta)| {
                let t = Angle::from_raw(*theta);
                let u = rng.uniform(j as u64, step);
                let b = params.sample_branch(t, u);
                *theta = Angle::snapped(params.tau(b, t))
                    .expect("positive-probability branch maps into [0, pi]")
                    .get();
            });
        self.step_count += 1;
    }

    pub fn histogram(&self, bins: usize) -> Histogram {
        Histogram::of_angles(&self.thetas, bins)
    }

    /// The empirical measure, one atom per distinct angle.
    pub fn empirical_measure(&self) -> AtomicMeasure {
        let w = 1.0 / self.thetas.len() as f64;
        AtomicMeasure::from_weights(self.thetas.iter().map(|&t| (t, w)))
            .expect("ensemble angles are valid")
    }
}
