//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::f64::consts::{FRAC_PI_6, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use knudsen::ensemble::ParticleEnsemble;
use knudsen::map::reflect_sym;
use knudsen::measure::{
    atomize_density, cesaro, distance_to_mu, evolve, Histogram, Interval, Uniform,
};
use knudsen::oracle::{
    default_grid, liouville_pushforward_check, validate_kernel_table, CellGeometry,
};
use knudsen::skew::{
    cylinder_fiber, fiber_measure, skew_monte_carlo_check, skew_pushforward_check, CylinderWord,
};
use knudsen::{Angle, AtomicMeasure, Branch, MapParams};

use common::{kernel_mass_under_mu, max_abs_diff, mu_ref};

const ALPHA: f64 = 0.5;
const BINS: usize = 45;

struct Outcome {
    passed: bool,
    detail: String,
}

fn criterion(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{} criterion {id} {name}: {} ({secs:.2}s)",
        if out.passed { "PASS" } else { "FAIL" },
        out.detail
    );
    out.passed
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn particle_reproduction() -> Outcome {
    let t0 = Instant::now();
    let p = MapParams::new(ALPHA).unwrap();
    let start = atomize_density(&Uniform, 1, BINS).unwrap();
    let mut ens = ParticleEnsemble::from_measure(&start, 30_000, 7).unwrap();
    for _ in 0..200 {
        ens.step_in_place(&p);
    }
    let h = ens.histogram(BINS);
    let elapsed = t0.elapsed();
    let ks = distance_to_mu(&h).ks;
    let dev = max_abs_diff(h.masses(), Histogram::mu(BINS).masses());
    Outcome {
        passed: ks < 0.02 && dev < 0.005 && within(elapsed, 10.0),
        detail: format!("ks={ks:.5} (<0.02), max bin dev={dev:.5} (<0.005), runtime <10s"),
    }
}

fn strong_law() -> Outcome {
    let t0 = Instant::now();
    let p = MapParams::new(ALPHA).unwrap();
    let nus = evolve(&atomize_density(&Uniform, 1, BINS).unwrap(), 200, &p).unwrap();
    let tv10 = distance_to_mu(&Histogram::of_measure(&nus[10], BINS)).tv;
    let tv200 = distance_to_mu(&Histogram::of_measure(&nus[200], BINS)).tv;
    let elapsed = t0.elapsed();
    Outcome {
        passed: tv200 < 0.02 && tv200 < tv10 && within(elapsed, 5.0),
        detail: format!("tv(200)={tv200:.5} (<0.02), tv(10)={tv10:.5}, runtime <5s"),
    }
}

fn weak_law() -> Outcome {
    let p = MapParams::new(ALPHA).unwrap();
    let nus = evolve(&AtomicMeasure::dirac(Angle::new(0.2).unwrap()), 200, &p).unwrap();
    let ks10 = distance_to_mu(&Histogram::of_measure(&nus[10], BINS)).ks;
    let avg = cesaro(&nus[1..]).unwrap();
    let ks_avg = distance_to_mu(&Histogram::of_measure(&avg, BINS)).ks;
    Outcome {
        passed: ks_avg < ks10,
        detail: format!("Cesaro ks over 1..200={ks_avg:.5} < ks(10)={ks10:.5}"),
    }
}

fn table_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, alpha) in [0.3, 0.5].into_iter().enumerate() {
        let g = CellGeometry::new(alpha).unwrap();
        let r = validate_kernel_table(&default_grid(50, g.params()), 100_000, 100 + i as u64, &g)
            .unwrap();
        passed &= r.max_z < 4.0 && r.total_unclassified == 0 && r.points.len() == 50;
        parts.push(format!(
            "alpha={alpha}: max z={:.3}, unclassified={}",
            r.max_z, r.total_unclassified
        ));
    }
    let elapsed = t0.elapsed();
    passed &= within(elapsed, 60.0);
    Outcome {
        passed,
        detail: format!("{} (z<4, 0 unclassified, runtime <60s)", parts.join("; ")),
    }
}

fn product_formula() -> Outcome {
    let p = MapParams::new(ALPHA).unwrap();
    let words: Vec<CylinderWord> = (1..=6).flat_map(CylinderWord::all_of_length).collect();
    let mut worst: f64 = 0.0;
    let points = 100;
    for i in 0..points {
        let x = Angle::new(PI * (i as f64 + 0.5 * (5f64.sqrt() - 1.0)) / points as f64).unwrap();
        for w in &words {
            worst = worst.max((cylinder_fiber(x, w, &p).length() - fiber_measure(x, w, &p)).abs());
        }
    }
    Outcome {
        passed: worst < 1e-12 && words.len() == 5460,
        detail: format!(
            "{} words x {points} points, max |fiber - product|={worst:.2e} (<1e-12)",
            words.len()
        ),
    }
}

fn skew_representation() -> Outcome {
    let p = MapParams::new(ALPHA).unwrap();
    let nu = atomize_density(&Uniform, 1, BINS).unwrap();
    let mut failures = 0;
    let mut worst_ratio: f64 = 0.0;
    for n in 1..=8 {
        for j in 0..16 {
            let a = Interval::dyadic(j, 16);
            let r =
                skew_monte_carlo_check(&nu, a, n, 100_000, 1000 * n as u64 + j as u64, &p).unwrap();
            if !r.agrees() {
                failures += 1;
            }
            if r.stderr > 0.0 {
                worst_ratio = worst_ratio.max((r.exact - r.estimate).abs() / r.stderr);
            }
        }
    }
    Outcome {
        passed: failures == 0,
        detail: format!(
            "128 checks, {failures} outside 4 stderr, worst |diff|/stderr={worst_ratio:.3}"
        ),
    }
}

fn invariance_suite() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();

    let mut unity: f64 = 0.0;
    let mut sym: f64 = 0.0;
    let mut inv: f64 = 0.0;
    for i in 1..=10 {
        let alpha = FRAC_PI_6 * i as f64 / 11.0;
        let p = MapParams::new(alpha).unwrap();
        for k in 0..=10_000 {
            let t = PI * k as f64 / 10_000.0;
            let theta = Angle::new(t).unwrap();
            unity = unity.max((p.probs(theta).iter().sum::<f64>() - 1.0).abs());
            let off_breakpoint = p.breakpoints().iter().all(|b| (t - b).abs() >= 1e-9);
            for b in Branch::ALL {
                if off_breakpoint {
                    sym = sym
                        .max((p.prob(b, reflect_sym(theta)) - p.prob(b.conjugate(), theta)).abs());
                }
                sym = sym
                    .max(((PI - p.tau_affine(b, PI - t)) - p.tau_affine(b.conjugate(), t)).abs());
            }
            use Branch::*;
            for (o, i) in [(Two, Two), (Four, Four), (One, Three), (Three, One)] {
                inv = inv.max((p.tau_affine(o, p.tau_affine(i, t)) - t).abs());
            }
        }
    }
    passed &= unity < 1e-12 && sym < 1e-12 && inv < 1e-12;
    parts.push(format!(
        "unity {unity:.1e}, conjugations {sym:.1e}, involutions {inv:.1e} (<1e-12)"
    ));

    let p = MapParams::new(ALPHA).unwrap();
    let mut mu_dev: f64 = 0.0;
    for j in 0..64 {
        let a = Interval::dyadic(j, 64);
        let pushed = kernel_mass_under_mu(ALPHA, a.lo, a.hi, |k, t| {
            p.prob(Branch::from_index(k), Angle::new(t).unwrap())
        });
        mu_dev = mu_dev.max((pushed - mu_ref(a.lo, a.hi)).abs());
    }
    passed &= mu_dev < 1e-8;
    parts.push(format!("mu-invariance {mu_dev:.1e} (<1e-8)"));

    let s = skew_pushforward_check(1_000_000, 77, &p).unwrap();
    let t = liouville_pushforward_check(1_000_000, 78, &CellGeometry::new(ALPHA).unwrap()).unwrap();
    passed &= s.passed && t.passed;
    parts.push(format!(
        "S push-forward max z {:.2} ({} of 1024 bins over 4), T push-forward max z {:.2} ({} of 256 bins over 4)",
        s.max_z, s.bins_failed, t.max_z, t.bins_failed
    ));

    Outcome {
        passed,
        detail: parts.join("; "),
    }
}

fn main() -> ExitCode {
    // Ignore libtest-style flags such as `--nocapture` that cargo may forward.
    let results = [
        criterion(1, "particle reproduction", particle_reproduction),
        criterion(2, "strong-law trend", strong_law),
        criterion(3, "weak-law check", weak_law),
        criterion(4, "ray-traced table oracle", table_oracle),
        criterion(5, "product formula", product_formula),
        criterion(6, "skew representation", skew_representation),
        criterion(7, "invariance suite", invariance_suite),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
