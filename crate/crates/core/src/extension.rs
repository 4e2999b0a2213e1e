//! The geometric construction of H = F_k' through the maps G and P, and the
//! bundled certificate for F_k as a convex C¹ k-Lipschitz extension of F.
//!
//! With z on the sphere |z| = k and r > 0,
//!
//! ```text
//! G(z, r) = (F*)'(r z)            for r < 1
//! G(z, r) = (r − 1) z + (F*)'(z)  for r ≥ 1
//! P(z, s) = s z for s < 1,  z for s ≥ 1
//! ```
//!
//! and H = P ∘ G⁻¹. The inverse is computed numerically and compared with
//! the maximizer-based H of [`RestrictedConjugate`].

use crate::energy::{Density, EnergyDensity};
use crate::legendre::{conjugate_sup_at, probe_directions, ConjugateHandle, RestrictedConjugate};
use crate::report::{Certificate, CheckResult};
use crate::sampling::{ball_point, omega_point, Halton};
use crate::vector::Vec2N;
use rayon::prelude::*;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtensionError {
    #[error("(F')⁻¹ did not converge at x = {x}, z = {z} (residual {residual:e})")]
    ConjGrad { x: String, z: String, residual: f64 },
    #[error("G could not be inverted at ξ = {xi} (residual {residual:e})")]
    Inversion { xi: String, residual: f64 },
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
}

/// Below this |ξ| the inverse map is bypassed and H = F'.
pub const ORIGIN_BYPASS: f64 = 1e-8;
const CONJ_GRAD_TOL: f64 = 1e-10;

/// ξ with F'(x, ξ) = z, the gradient of F*(x, ·) at z.
///
/// For energies with a kink at the origin every |z| ≤ f'(x, 0⁺) maps to 0,
/// the gradient of F* on the ball where it vanishes.
pub fn conj_grad(f: &EnergyDensity, x: Vec2N, z: Vec2N) -> Result<Vec2N, ExtensionError> {
    let xi = f.inverse_deriv(x, z).map_err(|_| ExtensionError::ConjGrad {
        x: x.to_string(),
        z: z.to_string(),
        residual: f64::INFINITY,
    })?;
    if z.norm() <= f.kink_slope(x) {
        return Ok(xi);
    }
    let residual = (f.deriv(x, xi) - z).norm();
    if residual <= CONJ_GRAD_TOL * (1.0 + z.norm()) {
        Ok(xi)
    } else {
        Err(ExtensionError::ConjGrad { x: x.to_string(), z: z.to_string(), residual })
    }
}

/// G and P for one energy, one x and one radius k.
///
/// Points of the sphere |z| = k are parameterized by angle in 2D and by
/// sign in 1D.
#[derive(Clone, Debug)]
pub struct InverseMaps {
    f: EnergyDensity,
    x: Vec2N,
    k: f64,
}

impl InverseMaps {
    pub fn new(f: &EnergyDensity, x: Vec2N, k: f64) -> Result<Self, ExtensionError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(ExtensionError::BadRadius(k));
        }
        Ok(Self { f: f.clone(), x, k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn x(&self) -> Vec2N {
        self.x
    }

    fn dim(&self) -> usize {
        self.f.dim()
    }

    /// The sphere point at angle θ (in 1D the sign of cos θ).
    pub fn sphere(&self, theta: f64) -> Vec2N {
        Vec2N::polar(self.dim(), self.k, theta)
    }

    pub fn conj_grad(&self, z: Vec2N) -> Result<Vec2N, ExtensionError> {
        conj_grad(&self.f, self.x, z)
    }

    /// G(z, r) for z on the sphere and r > 0.
    pub fn g(&self, z: Vec2N, r: f64) -> Result<Vec2N, ExtensionError> {
        if r < 1.0 {
            self.conj_grad(z * r)
        } else {
            Ok(z * (r - 1.0) + self.conj_grad(z)?)
        }
    }

    /// P(z, s) for z on the sphere and s > 0.
    pub fn p(&self, z: Vec2N, s: f64) -> Vec2N {
        if s < 1.0 {
            z * s
        } else {
            z
        }
    }

    /// Solves G(z, r) = ξ for (angle, r).
    pub fn invert_g(&self, xi: Vec2N) -> Result<(f64, f64), ExtensionError> {
        if self.dim() == 1 {
            return self.invert_g_1d(xi);
        }
        let fail = |residual: f64| ExtensionError::Inversion { xi: xi.to_string(), residual };
        let tol = 1e-12 * (1.0 + xi.norm());
        // start from the coincidence-set guess z = F'(ξ), else from the
        // boundary branch with the angle of F'(ξ)
        let g = self.f.deriv(self.x, xi);
        let mut theta = g.angle();
        let mut r = g.norm() / self.k;
        if r >= 1.0 {
            let base = self.conj_grad(self.sphere(theta))?;
            r = 1.0 + (xi - base).norm() / self.k;
        }
        let resid = |theta: f64, r: f64| -> Result<Vec2N, ExtensionError> { Ok(self.g(self.sphere(theta), r)? - xi) };
        let mut res = resid(theta, r)?;
        for _ in 0..100 {
            let rn = res.norm();
            if rn <= tol {
                return Ok((theta, r));
            }
            let ht = 1e-7;
            let hr = 1e-7 * r.max(1e-3);
            let dt = (resid(theta + ht, r)? - resid(theta - ht, r)?) * (0.5 / ht);
            let dr = (resid(theta, r + hr)? - resid(theta, (r - hr).max(0.5 * r))?) * (1.0 / (r + hr - (r - hr).max(0.5 * r)));
            let det = dt.x1() * dr.x2() - dt.x2() * dr.x1();
            if !det.is_finite() || det == 0.0 {
                return Err(fail(rn));
            }
            // Newton step for [dt dr]·(Δθ, Δr) = −res
            let d_theta = (-res.x1() * dr.x2() + res.x2() * dr.x1()) / det;
            let d_r = (-dt.x1() * res.x2() + dt.x2() * res.x1()) / det;
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..50 {
                let nt = theta + step * d_theta;
                let mut nr = r + step * d_r;
                if nr <= 0.0 {
                    nr = 0.5 * r;
                }
                let nres = resid(nt, nr)?;
                if nres.norm() < rn {
                    theta = nt;
                    r = nr;
                    res = nres;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                return Err(fail(rn));
            }
        }
        let rn = res.norm();
        if rn <= 1e3 * tol {
            Ok((theta, r))
        } else {
            Err(fail(rn))
        }
    }

    fn invert_g_1d(&self, xi: Vec2N) -> Result<(f64, f64), ExtensionError> {
        let theta = if xi.x1() >= 0.0 { 0.0 } else { std::f64::consts::PI };
        let z = self.sphere(theta);
        let t = xi.x1().abs();
        // r ↦ |G(z, r)| is continuous and increasing; bisect on it
        let size = |r: f64| -> Result<f64, ExtensionError> { Ok(self.g(z, r)?.x1().abs()) };
        let mut lo = 0.0;
        let mut hi = 1.0;
        while size(hi)? < t {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if size(mid)? < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((theta, 0.5 * (lo + hi)))
    }
}

/// H(ξ) = P(G⁻¹(ξ)); H = F'(ξ) for |ξ| below [`ORIGIN_BYPASS`].
pub fn h_via_inverse_map(maps: &InverseMaps, xi: Vec2N) -> Result<Vec2N, ExtensionError> {
    if xi.norm() < ORIGIN_BYPASS {
        return Ok(maps.f.deriv(maps.x, xi));
    }
    let (theta, r) = maps.invert_g(xi)?;
    Ok(maps.p(maps.sphere(theta), r))
}

/// Minimum image distance of G over an angle × radius lattice on
/// ∂B_k × (0, 4], with `count` inputs in total.
pub fn g_injectivity_probe(maps: &InverseMaps, count: usize) -> Result<f64, ExtensionError> {
    let n_angles = if maps.dim() == 1 { 2 } else { (count as f64).sqrt().round().max(2.0) as usize };
    let n_radii = (count / n_angles).max(2);
    let mut images = Vec::with_capacity(n_angles * n_radii);
    for i in 0..n_angles {
        let z = maps.sphere(TAU * i as f64 / n_angles as f64);
        for j in 1..=n_radii {
            images.push(maps.g(z, 4.0 * j as f64 / n_radii as f64)?);
        }
    }
    let min = images
        .par_iter()
        .enumerate()
        .map(|(a, p)| images[a + 1..].iter().map(|q| (*p - *q).norm()).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min);
    Ok(min)
}

/// How many samples each check of [`extension_certificate`] draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSpec {
    /// Pairs for the Lipschitz check.
    pub pairs: usize,
    /// Points for the coincidence, sandwich, derivative and exhaustion checks.
    pub points: usize,
    /// Points for the comparison with the inverse-map construction.
    pub cross_points: usize,
    /// Inputs for the injectivity probe of G.
    pub injectivity: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { pairs: 10_000, points: 1000, cross_points: 1000, injectivity: 10_000 }
    }
}

impl SampleSpec {
    /// A lighter sample for quick runs.
    pub fn quick() -> Self {
        Self { pairs: 1000, points: 200, cross_points: 200, injectivity: 2500 }
    }
}

/// Relative margin from the gluing sphere |F'| = k.
pub const GLUING_DELTA: f64 = 1e-6;
const LIPSCHITZ_TOL: f64 = 1e-10;
const COINCIDENCE_VALUE_TOL: f64 = 1e-8;
const COINCIDENCE_DERIV_TOL: f64 = 1e-6;
const SANDWICH_TOL: f64 = 1e-10;
const FD_TOL: f64 = 1e-5;
const CROSS_TOL: f64 = 1e-6;

fn scale(v: f64) -> f64 {
    1.0 + v.abs()
}

/// Radius of the sampled ξ-ball: twice the largest coincidence radius seen
/// over a few x, and at least 2, so both regimes |F'| < k and |F'| > k appear.
fn sample_radius(f: &EnergyDensity, k: f64) -> f64 {
    let n = f.dim();
    let mut h = Halton::new(n, 21);
    let mut rho: f64 = 0.0;
    for _ in 0..8 {
        let u = h.next_point();
        let x = omega_point(n, &u[..n]);
        for d in probe_directions(n, 16) {
            rho = rho.max(f.inverse_deriv_approx(x, d * k).0.norm());
        }
    }
    (2.0 * rho).max(2.0)
}

/// Samples (x, ξ) with ξ in the ball of radius `radius`.
fn sample_points(n: usize, radius: f64, count: usize, offset: u64) -> Vec<(Vec2N, Vec2N)> {
    let mut h = Halton::new(2 * n, offset);
    (0..count)
        .map(|_| {
            let u = h.next_point();
            (omega_point(n, &u[..n]), ball_point(n, radius, &u[n..2 * n]))
        })
        .collect()
}

/// Lipschitz, coincidence, sandwich, derivative consistency, monotone
/// exhaustion, and the inverse-map comparison for F_k, bundled into one
/// report. Checks that do not apply to the energy are marked skipped.
pub fn extension_certificate(f: &EnergyDensity, k: f64, spec: SampleSpec) -> Certificate {
    let mut cert = Certificate::new("extension");
    let rk = match RestrictedConjugate::analytic(f, k) {
        Ok(rk) => rk,
        Err(e) => {
            let mut c = CheckResult::new("construction");
            c.fail(e.to_string());
            cert.push(c);
            return cert;
        }
    };
    let n = f.dim();
    let radius = sample_radius(f, k);
    cert.push(lipschitz_check(&rk, radius, spec.pairs));
    let pts = sample_points(n, radius, spec.points, 31);
    cert.push(coincidence_check(&rk, &pts));
    cert.push(sandwich_check(&rk, &pts));
    cert.push(derivative_check(&rk, &pts));
    cert.push(exhaustion_check(&rk, &pts));
    cert.push(inverse_consistency_check(f, &pts));
    if rk.is_radial() {
        cert.push(closed_form_check(&rk, &pts));
    } else {
        cert.push(uniqueness_check(&rk, &pts));
    }
    cert.push(cross_validation_check(&rk, spec.cross_points));
    cert.push(injectivity_check(&rk, spec.injectivity));
    cert
}

fn lipschitz_check(rk: &RestrictedConjugate, radius: f64, pairs: usize) -> CheckResult {
    let n = rk.dim();
    let k = rk.k();
    let mut h = Halton::new(3 * n, 41);
    let samples: Vec<(Vec2N, Vec2N, Vec2N)> = (0..pairs)
        .map(|_| {
            let u = h.next_point();
            let x = omega_point(n, &u[..n]);
            let a = ball_point(n, radius, &u[n..2 * n]);
            let b = ball_point(n, radius, &u[2 * n..3 * n]);
            (x, a, b)
        })
        .collect();
    let margins: Vec<(f64, String)> = samples
        .par_iter()
        .map(|&(x, a, b)| {
            let (fa, fb) = (rk.eval(x, a), rk.eval(x, b));
            let bound = k * (a - b).norm() * (1.0 + LIPSCHITZ_TOL) + 1e-13 * scale(fa.max(fb));
            let diff = (fa - fb).abs();
            (bound - diff, format!("x = {x}, ξ = {a}, ζ = {b}: |ΔF_k| = {diff:e} > k|ξ − ζ| = {:e}", k * (a - b).norm()))
        })
        .collect();
    let mut c = CheckResult::new("lipschitz");
    for (m, what) in margins {
        c.record(m, || what);
    }
    c
}

fn coincidence_check(rk: &RestrictedConjugate, pts: &[(Vec2N, Vec2N)]) -> CheckResult {
    let f = rk.base();
    let k = rk.k();
    let rows: Vec<Option<(f64, String)>> = pts
        .par_iter()
        .map(|&(x, xi)| {
            let g = f.deriv(x, xi);
            if g.norm() > k * (1.0 - GLUING_DELTA) {
                return None;
            }
            let fv = f.eval(x, xi);
            let dv = (rk.eval(x, xi) - fv).abs();
            let dh = (rk.deriv(x, xi) - g).norm();
            let m = (COINCIDENCE_VALUE_TOL * scale(fv) - dv).min(COINCIDENCE_DERIV_TOL - dh);
            Some((m, format!("x = {x}, ξ = {xi}: |F_k − F| = {dv:e}, |H − F'| = {dh:e}")))
        })
        .collect();
    let mut c = CheckResult::new("coincidence");
    for (m, what) in rows.into_iter().flatten() {
        c.record(m, || what);
    }
    if c.samples == 0 {
        c = c.with_note("no sample fell in the coincidence set");
    }
    c
}

fn sandwich_check(rk: &RestrictedConjugate, pts: &[(Vec2N, Vec2N)]) -> CheckResult {
    let f = rk.base();
    let k = rk.k();
    let conj = ConjugateHandle::analytic(f);
    let rows: Vec<(f64, String)> = pts
        .par_iter()
        .map(|&(x, xi)| {
            let r = xi.norm();
            let v = rk.eval(x, xi);
            let m1 = conjugate_sup_at(&conj, x, 1.0, Some(xi)).to_f64();
            let mk = conjugate_sup_at(&conj, x, k, Some(xi)).to_f64();
            let lower = (r - m1).max(k * r - mk).max(0.0);
            let upper = (k * r).min(f.eval(x, xi));
            let tol = SANDWICH_TOL * scale(upper);
            ((v - lower + tol).min(upper - v + tol), format!("x = {x}, ξ = {xi}: {lower:e} ≤ F_k = {v:e} ≤ {upper:e} fails"))
        })
        .collect();
    let mut c = CheckResult::new("sandwich");
    for (m, what) in rows {
        c.record(m, || what);
    }
    c
}

fn derivative_check(rk: &RestrictedConjugate, pts: &[(Vec2N, Vec2N)]) -> CheckResult {
    let f = rk.base();
    let k = rk.k();
    let n = rk.dim();
    let kinked = |x: Vec2N| f.kink_slope(x) > 0.0;
    let rows: Vec<Option<(f64, String)>> = pts
        .par_iter()
        .map(|&(x, xi)| {
            let t = 1e-5 * (1.0 + xi.norm());
            if kinked(x) && xi.norm() <= 2.0 * t {
                return None;
            }
            // the stencil must stay on one side of the gluing sphere
            let side = f.deriv(x, xi).norm() <= k;
            let mut fd = Vec2N::zero(n);
            for i in 0..n {
                let mut e = Vec2N::zero(n);
                e.set(i, t);
                for p in [xi + e, xi - e] {
                    if (f.deriv(x, p).norm() <= k) != side {
                        return None;
                    }
                }
                fd.set(i, (rk.eval(x, xi + e) - rk.eval(x, xi - e)) / (2.0 * t));
            }
            let h = rk.deriv(x, xi);
            let err = (h - fd).norm();
            Some((FD_TOL * scale(h.norm()) - err, format!("x = {x}, ξ = {xi}: |H − ∇_FD F_k| = {err:e}")))
        })
        .collect();
    let mut c = CheckResult::new("derivative-consistency");
    for (m, what) in rows.into_iter().flatten() {
        c.record(m, || what);
    }
    c
}

fn exhaustion_check(rk: &RestrictedConjugate, pts: &[(Vec2N, Vec2N)]) -> CheckResult {
    let f = rk.base();
    let k = rk.k();
    let ladder: Vec<RestrictedConjugate> = (0..7).map(|j| rk.with_k(k * 2f64.powi(j)).expect("positive radius")).collect();
    let rows: Vec<(f64, String)> = pts
        .par_iter()
        .map(|&(x, xi)| {
            let vals: Vec<f64> = ladder.iter().map(|r| r.eval(x, xi)).collect();
            let fv = f.eval(x, xi);
            let tol = 1e-12 * scale(fv);
            let mut m = f64::INFINITY;
            for w in vals.windows(2) {
                m = m.min(w[1] - w[0] + tol);
            }
            m = m.min(fv - vals[vals.len() - 1] + tol);
            // at the top of the ladder the gap closes wherever |F'| lies inside the ball
            let top = ladder[ladder.len() - 1].k();
            if f.deriv(x, xi).norm() <= top * (1.0 - GLUING_DELTA) {
                m = m.min(COINCIDENCE_VALUE_TOL * scale(fv) - (fv - vals[vals.len() - 1]).abs());
            }
            (m, format!("x = {x}, ξ = {xi}: ladder {vals:?} against F = {fv:e}"))
        })
        .collect();
    let mut c = CheckResult::new("monotone-exhaustion");
    for (m, what) in rows {
        c.record(m, || what);
    }
    c
}

fn inverse_consistency_check(f: &EnergyDensity, pts: &[(Vec2N, Vec2N)]) -> CheckResult {
    let mut c = CheckResult::new("inverse-consistency");
    for &(x, xi) in pts.iter().take(200) {
        let z = f.deriv(x, xi);
        let tol = CONJ_GRAD_TOL * scale(z.norm().max(xi.norm()));
        match conj_grad(f, x, z) {
            Ok(back) => {
                let e1 = (back - xi).norm();
                let e2 = (f.deriv(x, back) - z).norm();
                let kink_zero = xi.norm() == 0.0;
                let m = if kink_zero { tol - e2 } else { (tol - e2).min(1e2 * tol - e1) };
                c.record(m, || format!("x = {x}, ξ = {xi}: |ξ − (F')⁻¹(F'(ξ))| = {e1:e}, residual {e2:e}"));
            }
            Err(e) => c.fail(e.to_string()),
        }
    }
    c
}

fn closed_form_check(rk: &RestrictedConjugate, pts: &[(Vec2N, Vec2N)]) -> CheckResult {
    let rows: Vec<(f64, String)> = pts
        .par_iter()
        .map(|&(x, xi)| {
            let v = rk.eval_by_search(x, xi).0;
            let cf = rk.closed_form(x, xi).expect("radial energy");
            let err = (v - cf).abs();
            (COINCIDENCE_VALUE_TOL * scale(cf) - err, format!("x = {x}, ξ = {xi}: search {v:e} vs closed form {cf:e}"))
        })
        .collect();
    let mut c = CheckResult::new("closed-form");
    for (m, what) in rows {
        c.record(m, || what);
    }
    c
}

fn uniqueness_check(rk: &RestrictedConjugate, pts: &[(Vec2N, Vec2N)]) -> CheckResult {
    let f = rk.base();
    let k = rk.k();
    let mut c = CheckResult::new("argmax-unique");
    for &(x, xi) in pts.iter().take(50) {
        let g = f.deriv(x, xi);
        if g.norm() <= k {
            continue;
        }
        let (va, za) = rk.argmax_from(x, xi, g);
        let (vb, zb) = rk.argmax_from(x, xi, g.perp() * -1.0);
        let gap = (za - zb).norm();
        let tied = (va - vb).abs() <= 1e-10 * scale(va);
        // distinct maximizers with equal values would be a duplicate maximum
        let m = if tied { CROSS_TOL * k - gap } else { CROSS_TOL * k - gap.min(CROSS_TOL * k) };
        c.record(m, || format!("x = {x}, ξ = {xi}: starts reached {za} ({va:e}) and {zb} ({vb:e})"));
    }
    c
}

/// ξ-samples for the inverse-map comparison: uniform in the ball of radius
/// max(4k, 2ρ) plus pairs straddling the gluing sphere |F'| = k.
fn cross_samples(rk: &RestrictedConjugate, count: usize) -> Vec<(Vec2N, Vec2N)> {
    let f = rk.base();
    let n = rk.dim();
    let k = rk.k();
    let radius = (4.0 * k).max(sample_radius(f, k));
    let mut pts = sample_points(n, radius, count - count / 4, 51);
    let mut h = Halton::new(n + 1, 52);
    while pts.len() < count {
        let u = h.next_point();
        let x = omega_point(n, &u[..n]);
        let d = Vec2N::polar(n, 1.0, TAU * u[n]);
        for s in [1.0 - 1e-4, 1.0 + 1e-4] {
            let xi = f.inverse_deriv_approx(x, d * (k * s)).0;
            if xi.norm() > 0.0 {
                pts.push((x, xi));
            }
        }
    }
    pts
}

fn cross_validation_check(rk: &RestrictedConjugate, count: usize) -> CheckResult {
    let k = rk.k();
    let f = rk.base();
    let rows: Vec<(f64, String)> = cross_samples(rk, count)
        .par_iter()
        .map(|&(x, xi)| {
            let maps = InverseMaps::new(f, x, k).expect("positive radius");
            match h_via_inverse_map(&maps, xi) {
                Ok(h) => {
                    let d = (h - rk.deriv(x, xi)).norm();
                    (CROSS_TOL * k - d, format!("x = {x}, ξ = {xi}: |H_G − H| = {d:e}"))
                }
                Err(e) => (f64::NEG_INFINITY, format!("x = {x}, ξ = {xi}: {e}")),
            }
        })
        .collect();
    let mut c = CheckResult::new("inverse-map-agreement");
    for (m, what) in rows {
        c.record(m, || what);
    }
    c
}

fn injectivity_check(rk: &RestrictedConjugate, count: usize) -> CheckResult {
    let f = rk.base();
    let x = omega_point(rk.dim(), &[0.5, 0.5]);
    if f.kink_slope(x) > 0.0 {
        return CheckResult::skipped(
            "g-injective",
            "(F*)' vanishes on a ball around 0, so G collapses the small radii",
        );
    }
    let mut c = CheckResult::new("g-injective");
    let maps = InverseMaps::new(f, x, rk.k()).expect("positive radius");
    match g_injectivity_probe(&maps, count) {
        Ok(d) => c.record(d - 1e-9, || format!("minimum image distance {d:e}")),
        Err(e) => c.fail(e.to_string()),
    }
    c
}

/// Both sides of the absolute-value difference-quotient claim
/// |(G_k'(ξ_k) − G'(ξ))·ζ| ≤ |G_k(ξ_k + ζ) − G_k(ξ_k) − G'(ξ)·ζ|.
///
/// The claim is false in general: for G_k = G = ½|ξ|² and ζ = ξ − ξ_k the
/// left side is |ξ − ξ_k|² and the right side half of that. Returned as
/// (left, right) so callers can exhibit the failure.
pub fn absolute_quotient_claim<A: Density + ?Sized, B: Density + ?Sized>(
    gk: &A,
    g: &B,
    x: Vec2N,
    xi_k: Vec2N,
    xi: Vec2N,
    zeta: Vec2N,
) -> (f64, f64) {
    let gd = g.gradient(x, xi);
    let lhs = (gk.gradient(x, xi_k) - gd).dot(&zeta).abs();
    let rhs = (gk.value(x, xi_k + zeta) - gk.value(x, xi_k) - gd.dot(&zeta)).abs();
    (lhs, rhs)
}

/// The one-sided chain that does hold for convex C¹ G_k and 0 < t ≤ 1:
/// G_k'(ξ_k)·ζ ≤ (G_k(ξ_k + tζ) − G_k(ξ_k))/t ≤ G_k(ξ_k + ζ) − G_k(ξ_k).
///
/// Returns the smaller of the two gaps; nonnegative (up to roundoff) when
/// the chain holds. Keeping the signs is what lets G_k' → G' follow from
/// G_k → G locally uniformly.
pub fn one_sided_quotient_gap<A: Density + ?Sized>(gk: &A, x: Vec2N, xi_k: Vec2N, zeta: Vec2N, t: f64) -> f64 {
    let base = gk.value(x, xi_k);
    let slope = gk.gradient(x, xi_k).dot(&zeta);
    let dq_t = (gk.value(x, xi_k + zeta * t) - base) / t;
    let dq_1 = gk.value(x, xi_k + zeta) - base;
    (dq_t - slope).min(dq_1 - dq_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::energy::make_energy;
    use std::collections::BTreeMap;

    fn close(a: Vec2N, b: Vec2N, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn conj_grad_examples() {
        let x2 = Vec2N::new2(0.5, 0.5);
        let quad = EnergyDensity::power(2, 2.0).unwrap();
        assert!(close(conj_grad(&quad, x2, Vec2N::new2(1.0, 2.0)).unwrap(), Vec2N::new2(1.0, 2.0), 1e-14));
        let quartic = EnergyDensity::power(2, 4.0).unwrap();
        assert!(close(conj_grad(&quartic, x2, Vec2N::new2(8.0, 0.0)).unwrap(), Vec2N::new2(2.0, 0.0), 1e-12));
        let exp = make_energy(
            "exponential_coeff",
            1,
            &BTreeMap::new(),
            BTreeMap::from([("omega".to_string(), CoefficientField::constant(1.0))]),
        )
        .unwrap();
        let e = std::f64::consts::E;
        assert!(close(conj_grad(&exp, Vec2N::new1(0.5), Vec2N::new1(e)).unwrap(), Vec2N::new1(1.0), 1e-12));
    }

    #[test]
    fn quadratic_inverse_map_in_both_regimes() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let maps = InverseMaps::new(&f, Vec2N::new2(0.5, 0.5), 1.0).unwrap();
        assert!(close(h_via_inverse_map(&maps, Vec2N::new2(0.5, 0.0)).unwrap(), Vec2N::new2(0.5, 0.0), 1e-10));
        assert!(close(h_via_inverse_map(&maps, Vec2N::new2(3.0, 0.0)).unwrap(), Vec2N::new2(1.0, 0.0), 1e-10));
    }

    #[test]
    fn inverse_map_is_continuous_across_gluing_sphere() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let maps = InverseMaps::new(&f, Vec2N::new2(0.5, 0.5), 1.0).unwrap();
        let d = Vec2N::polar(2, 1.0, 0.7);
        let a = h_via_inverse_map(&maps, d * (1.0 - 1e-9)).unwrap();
        let b = h_via_inverse_map(&maps, d * (1.0 + 1e-9)).unwrap();
        assert!((a - b).norm() <= 1e-6);
    }

    #[test]
    fn one_dimensional_inverse_map() {
        let f = EnergyDensity::power(1, 4.0).unwrap();
        let maps = InverseMaps::new(&f, Vec2N::new1(0.5), 2.0).unwrap();
        let rk = RestrictedConjugate::analytic(&f, 2.0).unwrap();
        for t in [-3.0, -1.0, -0.2, 0.4, 1.2, 5.0] {
            let xi = Vec2N::new1(t);
            let h = h_via_inverse_map(&maps, xi).unwrap();
            assert!(close(h, rk.deriv(Vec2N::new1(0.5), xi), 1e-9), "ξ = {t}");
        }
    }

    #[test]
    fn quick_certificates_pass() {
        let quad = EnergyDensity::power(2, 2.0).unwrap();
        let cert = extension_certificate(&quad, 1.0, SampleSpec::quick());
        assert!(cert.passed(), "{}", cert.summary());
        let aniso = make_energy(
            "anisotropic_double_phase",
            2,
            &BTreeMap::from([("p".to_string(), 2.0), ("q".to_string(), 4.0)]),
            BTreeMap::from([("a".to_string(), CoefficientField::constant(1.0))]),
        )
        .unwrap();
        let cert = extension_certificate(&aniso, 4.0, SampleSpec::quick());
        assert!(cert.passed(), "{}", cert.summary());
    }

    #[test]
    fn absolute_quotient_claim_fails_for_quadratic() {
        let g = EnergyDensity::power(2, 2.0).unwrap();
        let x = Vec2N::new2(0.5, 0.5);
        let xi = Vec2N::new2(1.0, 0.0);
        let xi_k = Vec2N::new2(0.0, 0.0);
        let (lhs, rhs) = absolute_quotient_claim(&g, &g, x, xi_k, xi, xi - xi_k);
        assert_eq!((lhs, rhs), (1.0, 0.5));
        assert!(lhs > rhs);
        assert!(one_sided_quotient_gap(&g, x, xi_k, xi - xi_k, 0.5) >= 0.0);
    }

    #[test]
    fn corrupted_derivative_fails_certificate() {
        let f = EnergyDensity::power(2, 2.0).unwrap().with_corrupted_derivative(1.3);
        let cert = extension_certificate(&f, 1.0, SampleSpec::quick());
        assert!(!cert.passed());
    }
}
