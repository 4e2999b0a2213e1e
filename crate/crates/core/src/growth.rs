//! Sampled growth probes: local bound M_F(r), superlinearity ratio, and the
//! derivative bound |F'(x, ξ)| ≤ M_F(|ξ| + 1).
//!
//! All probes sample Ω × ξ-space with a fixed Halton stream, so results are
//! reproducible. A passing probe means no counterexample was found at the
//! sampled resolution; uniformity in x cannot be certified by sampling.

use crate::energy::Density;
use crate::sampling::{ball_point, omega_point, sphere_point, Halton};

/// Estimate of M_F(r) = sup_{x∈Ω, |ξ|<r} F(x, ξ).
///
/// Half of the samples lie on the sphere |ξ| = r, where convex densities
/// with F(x, 0) = 0 attain the supremum over the closed ball, and half in the
/// ball. The sample set is the same for every r up to scaling, so the
/// estimate is nondecreasing in r for such densities.
pub fn local_bound_mf<D: Density + ?Sized>(f: &D, r: f64, samples: usize) -> f64 {
    assert!(r > 0.0, "radius must be positive");
    let n = f.dim();
    let mut h = Halton::new(2 * n + 1, 0);
    let mut best = 0.0_f64;
    for i in 0..samples.max(1) {
        let u = h.next_point();
        let x = omega_point(n, &u[..n]);
        let xi = if i % 2 == 0 {
            sphere_point(n, r, u[n])
        } else {
            ball_point(n, r, &u[n..2 * n])
        };
        best = best.max(f.value(x, xi));
    }
    best
}

/// Estimate of inf_{x∈Ω, |ξ|=r} F(x, ξ) / |ξ|.
pub fn superlinearity_ratio<D: Density + ?Sized>(f: &D, r: f64, samples: usize) -> f64 {
    assert!(r > 0.0, "radius must be positive");
    let n = f.dim();
    let mut h = Halton::new(n + 1, 1);
    let mut best = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let u = h.next_point();
        let x = omega_point(n, &u[..n]);
        let xi = sphere_point(n, r, u[n]);
        best = best.min(f.value(x, xi) / r);
    }
    best
}

/// Outcome of [`derivative_bound_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBoundReport {
    pub holds: bool,
    /// max over samples of |F'(x, ξ)| / M_F(|ξ| + 1).
    pub worst_ratio: f64,
    pub samples: usize,
}

const BOUND_TOL: f64 = 1e-9;
const RADIUS_BUCKETS: usize = 64;

/// Checks |F'(x, ξ)| ≤ M_F(|ξ| + 1)·(1 + 1e−9) on sampled (x, ξ) with |ξ| ≤ r.
pub fn derivative_bound_check<D: Density + ?Sized>(f: &D, r: f64, samples: usize) -> bool {
    derivative_bound_report(f, r, samples).holds
}

/// [`derivative_bound_check`] with the worst observed ratio.
///
/// M_F is tabulated on a radius grid over [1, r + 1] and each sample uses the
/// grid value at or below |ξ| + 1, which can only make the check stricter.
pub fn derivative_bound_report<D: Density + ?Sized>(f: &D, r: f64, samples: usize) -> DerivativeBoundReport {
    assert!(r > 0.0, "radius must be positive");
    let n = f.dim();
    let step = r / RADIUS_BUCKETS as f64;
    let table: Vec<f64> = (0..=RADIUS_BUCKETS)
        .map(|i| local_bound_mf(f, 1.0 + i as f64 * step, samples))
        .collect();
    let mut h = Halton::new(2 * n, 2);
    let mut worst = 0.0_f64;
    for _ in 0..samples.max(1) {
        let u = h.next_point();
        let x = omega_point(n, &u[..n]);
        let xi = ball_point(n, r, &u[n..2 * n]);
        let bucket = ((xi.norm() / step).floor() as usize).min(RADIUS_BUCKETS);
        let m = table[bucket];
        let g = f.gradient(x, xi).norm();
        if g > 0.0 {
            worst = worst.max(g / m);
        }
    }
    DerivativeBoundReport { holds: worst <= 1.0 + BOUND_TOL, worst_ratio: worst, samples }
}
