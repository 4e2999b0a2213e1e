//! The restricted conjugate F_k(x, ξ) = sup_{|z|≤k} (ξ·z − F*(x, z)) and its
//! derivative H = F_k'.

use super::conjugate::{ConjugateHandle, ConjugateKind};
use super::LegendreError;
use crate::energy::{Density, EnergyDensity};
use crate::vector::{ExtReal, Vec2N};

const GOLDEN_MAX_ITER: usize = 200;
const ASCENT_MAX_ITER: usize = 5000;
const SPHERE_SCAN: usize = 32;

/// The pair (F_k, H) for one radius k.
///
/// Radial energies maximize r ↦ r|ξ| − f*(x, r) over [0, k] by golden-section
/// search and use the closed-form derivative: H = F' where |F'| ≤ k, and
/// k·ξ/|ξ| beyond. Other energies run projected gradient ascent on
/// z ↦ ξ·z − F*(x, z) over the closed ball and return the maximizer as H.
#[derive(Clone, Debug)]
pub struct RestrictedConjugate {
    base: EnergyDensity,
    conj: ConjugateHandle,
    k: f64,
    radial: bool,
}

/// Builds F_k from an energy and a conjugate handle of that energy.
pub fn restricted_conjugate(f: &EnergyDensity, conj: ConjugateHandle, k: f64) -> Result<RestrictedConjugate, LegendreError> {
    RestrictedConjugate::new(f, conj, k)
}

impl RestrictedConjugate {
    pub fn new(f: &EnergyDensity, conj: ConjugateHandle, k: f64) -> Result<Self, LegendreError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(LegendreError::BadRadius(k));
        }
        if !conj.matches(f) {
            return Err(LegendreError::SourceMismatch {
                handle: conj.source().name().to_string(),
                energy: f.name().to_string(),
            });
        }
        Ok(Self { base: f.clone(), conj, k, radial: f.flags().radial_in_xi })
    }

    /// F_k with the analytic conjugate.
    pub fn analytic(f: &EnergyDensity, k: f64) -> Result<Self, LegendreError> {
        Self::new(f, ConjugateHandle::analytic(f), k)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn base(&self) -> &EnergyDensity {
        &self.base
    }

    pub fn conj(&self) -> &ConjugateHandle {
        &self.conj
    }

    /// True when evaluation uses the one-dimensional radial maximization.
    pub fn is_radial(&self) -> bool {
        self.radial
    }

    /// The same energy and conjugate at another radius.
    pub fn with_k(&self, k: f64) -> Result<Self, LegendreError> {
        Self::new(&self.base, self.conj.clone(), k)
    }

    /// F_k(x, ξ). Falls back to the best ascent iterate (a lower bound) if
    /// the generic path does not converge; use [`Self::try_eval`] to see errors.
    pub fn eval(&self, x: Vec2N, xi: Vec2N) -> f64 {
        match self.try_eval(x, xi) {
            Ok((v, _)) => v,
            Err(_) => self.ascent(x, xi, None).0,
        }
    }

    /// F_k(x, ξ) together with the maximizing z.
    pub fn try_eval(&self, x: Vec2N, xi: Vec2N) -> Result<(f64, Vec2N), LegendreError> {
        let dim = xi.dim();
        if xi.norm() == 0.0 {
            return Ok((0.0, Vec2N::zero(dim)));
        }
        if self.radial {
            if self.conj.kind() == ConjugateKind::Analytic {
                if let (Some(v), Some(prof)) = (self.closed_form(x, xi), self.base.radial_profile(x)) {
                    let r = xi.norm();
                    let s = prof.slope(r).min(self.k);
                    return Ok((v, xi * (s / r)));
                }
            }
            return Ok(self.eval_by_search(x, xi));
        }
        let (v, z, step) = self.ascent(x, xi, None);
        if step <= 1e-9 * self.k {
            Ok((v, z))
        } else {
            Err(LegendreError::NoConvergence { x: x.to_string(), xi: xi.to_string(), residual: step })
        }
    }

    /// H(x, ξ) = F_k'(x, ξ).
    pub fn deriv(&self, x: Vec2N, xi: Vec2N) -> Vec2N {
        let r = xi.norm();
        if r == 0.0 {
            return Vec2N::zero(xi.dim());
        }
        if self.radial {
            let g = self.base.deriv(x, xi);
            if g.norm() <= self.k {
                g
            } else {
                xi * (self.k / r)
            }
        } else {
            match self.try_eval(x, xi) {
                Ok((_, z)) => z,
                Err(_) => self.ascent(x, xi, None).1,
            }
        }
    }

    /// F_k and its maximizer by a golden-section search of the radial sup,
    /// bypassing the closed form. Radial energies only; other energies
    /// fall back to [`Self::try_eval`].
    pub fn eval_by_search(&self, x: Vec2N, xi: Vec2N) -> (f64, Vec2N) {
        let r = xi.norm();
        if !self.radial || r == 0.0 {
            return self.try_eval(x, xi).unwrap_or_else(|_| {
                let (v, z, _) = self.ascent(x, xi, None);
                (v, z)
            });
        }
        let (v, s) = self.golden(x, r);
        (v, xi * (s / r))
    }

    /// The maximizer reached from a chosen starting point (generic path).
    ///
    /// Used to probe uniqueness: distinct starts must reach the same z.
    pub fn argmax_from(&self, x: Vec2N, xi: Vec2N, start: Vec2N) -> (f64, Vec2N) {
        let (v, z, _) = self.ascent(x, xi, Some(start));
        (v, z)
    }

    /// Closed form of the radial case: F where f'(|ξ|) ≤ k, and
    /// k|ξ| − f*(x, k) beyond. `None` for non-radial energies.
    pub fn closed_form(&self, x: Vec2N, xi: Vec2N) -> Option<f64> {
        let prof = self.base.radial_profile(x)?;
        let r = xi.norm();
        if prof.slope(r) <= self.k || r == 0.0 {
            Some(prof.value(r))
        } else {
            Some(self.k * r - prof.conjugate(self.k))
        }
    }

    fn conj_radial(&self, x: Vec2N, s: f64) -> f64 {
        match self.conj.eval_radial(x, s) {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    /// max over r ∈ [0, k] of φ(r) = r·t − f*(x, r); returns (value, argmax).
    fn golden(&self, x: Vec2N, t: f64) -> (f64, f64) {
        let k = self.k;
        let phi = |r: f64| r * t - self.conj_radial(x, r);
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (0.0, k);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (phi(c), phi(d));
        for _ in 0..GOLDEN_MAX_ITER {
            // φ is concave, so the bracket always holds the maximizer; at this
            // width the value error is far below 1e−10·(1 + k·t)
            if b - a <= 1e-13 * k {
                break;
            }
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = phi(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = phi(d);
            }
        }
        let mut best = if fc >= fd { (fc, c) } else { (fd, d) };
        for r in [0.0, k] {
            let v = phi(r);
            if v >= best.0 {
                best = (v, r);
            }
        }
        best
    }

    /// Projected gradient ascent on ψ(z) = ξ·z − F*(x, z) over |z| ≤ k.
    ///
    /// Returns (value, maximizer, last step length).
    fn ascent(&self, x: Vec2N, xi: Vec2N, start: Option<Vec2N>) -> (f64, Vec2N, f64) {
        let k = self.k;
        let dim = xi.dim();
        let g0 = self.base.deriv(x, xi);
        if start.is_none() && g0.norm() <= k {
            // interior maximizer z = F'(ξ), where ψ equals F(ξ) by Fenchel's identity
            return (self.base.eval(x, xi), g0, 0.0);
        }
        if dim == 1 && start.is_none() {
            // the constrained maximum of a concave function on an interval whose
            // free maximizer lies outside sits at the nearer endpoint
            let z = Vec2N::new1(k * g0.x1().signum());
            return (self.psi(x, xi, z).0, z, 0.0);
        }
        if start.is_none() {
            if let Some(found) = self.sphere_search(x, xi) {
                return found;
            }
        }
        let mut z = start.unwrap_or(g0).clamp_norm(k);
        let (mut val, mut eta) = self.psi(x, xi, z);
        // step ~ 1/L with L the curvature of F* = inverse curvature of F at η
        let mut tau = self.inverse_curvature(x, eta).clamp(1e-12, 1e12);
        let mut step = f64::INFINITY;
        for _ in 0..ASCENT_MAX_ITER {
            let grad = xi - eta;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = (z + grad * tau).clamp_norm(k);
                let (cv, ceta) = self.psi(x, xi, cand);
                let d = cand - z;
                let slack = 1e-15 * (1.0 + val.abs());
                if cv >= val + 1e-4 * grad.dot(&d) - slack || d.norm() <= 1e-16 * k {
                    step = d.norm();
                    z = cand;
                    val = cv.max(val);
                    eta = ceta;
                    accepted = true;
                    break;
                }
                tau *= 0.5;
            }
            if !accepted || step <= 1e-14 * k {
                break;
            }
            tau *= 2.0;
        }
        // report the projected-gradient residual rather than the last move,
        // which can be small merely because the line search shrank τ
        let c = self.inverse_curvature(x, eta).clamp(1e-12, 1e12);
        let residual = ((z + (xi - eta) * c).clamp_norm(k) - z).norm();
        (val, z, residual)
    }

    /// Maximizes ψ over the circle |z| = k, where the maximizer lies once
    /// F'(ξ) is outside the ball. A coarse angular scan brackets the best
    /// angle and a safeguarded secant on dψ/dθ = (ξ − η)·z⊥ refines it.
    ///
    /// Returns `None` unless the KKT multiplier (ξ − η)·z / k² is
    /// nonnegative, so the caller can fall back to the ascent.
    fn sphere_search(&self, x: Vec2N, xi: Vec2N) -> Option<(f64, Vec2N, f64)> {
        let k = self.k;
        let at = |t: f64| {
            let z = Vec2N::polar(2, k, t);
            let (v, eta) = self.psi(x, xi, z);
            let slope = (xi - eta).dot(&z.perp());
            (v, z, eta, slope)
        };
        let refine = |mut a: f64, mut b: f64, mut sa: f64, mut sb: f64| {
            // Illinois variant of regula falsi on the slope sign change
            let mut t = 0.5 * (a + b);
            let mut side = 0i8;
            for _ in 0..100 {
                t = if sa != sb { a + sa * (b - a) / (sa - sb) } else { 0.5 * (a + b) };
                if !(t > a && t < b) {
                    t = 0.5 * (a + b);
                }
                let s = at(t).3;
                if s > 0.0 {
                    a = t;
                    sa = s;
                    if side == 1 {
                        sb *= 0.5;
                    }
                    side = 1;
                } else {
                    b = t;
                    sb = s;
                    if side == -1 {
                        sa *= 0.5;
                    }
                    side = -1;
                }
                if b - a <= 1e-14 || s == 0.0 {
                    break;
                }
            }
            let (v, z, eta, slope) = at(t);
            let lambda = (xi - eta).dot(&z) / (k * k);
            let scale = 1.0 + xi.norm() + eta.norm();
            (lambda >= -1e-12).then_some((v, z, (slope.abs() / (k * scale)).min(b - a)))
        };
        // bracket outward from the angle of F'(ξ), which is usually close
        let t0 = self.base.deriv(x, xi).angle();
        let s0 = at(t0).3;
        let dir = if s0 > 0.0 { 1.0 } else { -1.0 };
        let mut step = 0.05;
        let (mut prev, mut sprev) = (t0, s0);
        while step <= std::f64::consts::PI {
            let t = t0 + dir * step;
            let s = at(t).3;
            if (s > 0.0) != (sprev > 0.0) {
                let found = if dir > 0.0 { refine(prev, t, sprev, s) } else { refine(t, prev, s, sprev) };
                if found.is_some() {
                    return found;
                }
                break;
            }
            prev = t;
            sprev = s;
            step *= 2.0;
        }
        // slow path: scan the whole circle for the best angle
        let n = SPHERE_SCAN;
        let width = std::f64::consts::TAU / n as f64;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..n {
            let t = i as f64 * width;
            let v = at(t).0;
            if v > best.0 {
                best = (v, t);
            }
        }
        let (a, b) = (best.1 - width, best.1 + width);
        let (sa, sb) = (at(a).3, at(b).3);
        if !(sa >= 0.0 && sb <= 0.0) {
            return None;
        }
        refine(a, b, sa, sb)
    }

    /// ψ(z) = ξ·z − F*(x, z) and the conjugate gradient η = (F*)'(z).
    fn psi(&self, x: Vec2N, xi: Vec2N, z: Vec2N) -> (f64, Vec2N) {
        let (eta, _) = self.base.inverse_deriv_approx(x, z);
        let fstar = (z.dot(&eta) - self.base.eval(x, eta)).max(0.0);
        (xi.dot(&z) - fstar, eta)
    }

    fn inverse_curvature(&self, x: Vec2N, eta: Vec2N) -> f64 {
        let h = self.base.hessian(x, eta);
        if eta.dim() == 1 {
            return 1.0 / h[0][0];
        }
        let tr = h[0][0] + h[1][1];
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let lmin = 0.5 * tr - disc;
        if lmin > 0.0 && lmin.is_finite() {
            lmin
        } else {
            1.0
        }
    }
}

impl Density for RestrictedConjugate {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: Vec2N, xi: Vec2N) -> f64 {
        self.eval(x, xi)
    }
    fn gradient(&self, x: Vec2N, xi: Vec2N) -> Vec2N {
        self.deriv(x, xi)
    }
    fn value_and_gradient(&self, x: Vec2N, xi: Vec2N) -> (f64, Vec2N) {
        if self.radial {
            return (self.eval(x, xi), self.deriv(x, xi));
        }
        match self.try_eval(x, xi) {
            Ok(found) => found,
            Err(_) => {
                let (v, z, _) = self.ascent(x, xi, None);
                (v, z)
            }
        }
    }
}
