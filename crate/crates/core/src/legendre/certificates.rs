//! Numerical certificates for conjugate identities, F_k* and the duality
//! between superlinearity and local boundedness.

use super::conjugate::{conjugate_sup_at, probe_directions, probe_points, ConjugateHandle, GridConjugate};
use super::restricted::RestrictedConjugate;
use crate::energy::{Density, EnergyDensity};
use crate::growth::local_bound_mf;
use crate::report::{CheckResult, Certificate};
use crate::sampling::{ball_point, omega_point, Halton};
use crate::vector::{ExtReal, Vec2N};

/// Relative tolerance on |F*(F'(ξ)) + F(ξ) − ξ·F'(ξ)|.
pub const FENCHEL_IDENTITY_TOL: f64 = 1e-8;
const FENCHEL_INEQUALITY_TOL: f64 = 1e-12;
/// Margin from the sphere |z| = k for the interior F_k* comparison.
const DELTA: f64 = 1e-6;

fn scale(v: f64) -> f64 {
    1.0 + v.abs()
}

fn value_or_inf(v: ExtReal) -> f64 {
    v.to_f64()
}

/// Fenchel's inequality ξ·z ≤ F + F* on `triples` samples and the identity
/// F*(F'(ξ)) + F(ξ) = ξ·F'(ξ) on `triples / 10` samples.
///
/// ξ is drawn from the ball of radius `radius`, z from the ball of radius
/// max |F'| over that ball.
pub fn fenchel_certificate(f: &EnergyDensity, conj: &ConjugateHandle, radius: f64, triples: usize) -> Certificate {
    let n = f.dim();
    let mut cert = Certificate::new("fenchel");
    let zmax = probe_directions(n, 16)
        .into_iter()
        .map(|d| f.deriv(omega_point(n, &[0.5, 0.5]), d * radius).norm())
        .fold(1.0_f64, f64::max);

    let mut ineq = CheckResult::new("fenchel-inequality");
    let mut h = Halton::new(3 * n, 11);
    for _ in 0..triples {
        let u = h.next_point();
        let x = omega_point(n, &u[..n]);
        let xi = ball_point(n, radius, &u[n..2 * n]);
        let z = ball_point(n, 2.0 * zmax, &u[2 * n..3 * n]);
        let lhs = xi.dot(&z);
        let rhs = f.eval(x, xi) + value_or_inf(conj.eval(x, z));
        ineq.record(rhs - lhs + FENCHEL_INEQUALITY_TOL * scale(lhs.abs().max(rhs.abs())), || {
            format!("x = {x}, ξ = {xi}, z = {z}: ξ·z = {lhs:e} > F + F* = {rhs:e}")
        });
    }
    cert.push(ineq);

    let mut ident = CheckResult::new("fenchel-identity");
    let mut h = Halton::new(2 * n, 12);
    for _ in 0..(triples / 10).max(1) {
        let u = h.next_point();
        let x = omega_point(n, &u[..n]);
        let xi = ball_point(n, radius, &u[n..2 * n]);
        let g = f.deriv(x, xi);
        let pairing = xi.dot(&g);
        let res = value_or_inf(conj.eval(x, g)) + f.eval(x, xi) - pairing;
        let tol = FENCHEL_IDENTITY_TOL * scale(pairing.max(f.eval(x, xi)));
        ident.record(tol - res.abs(), || format!("x = {x}, ξ = {xi}: residual {res:e}"));
    }
    cert.push(ident);
    cert
}

/// Largest |(F')⁻¹(z)| over |z| = k at x, i.e. the radius of the coincidence set.
fn coincidence_radius(f: &EnergyDensity, x: Vec2N, k: f64) -> f64 {
    probe_directions(f.dim(), 64)
        .into_iter()
        .map(|d| f.inverse_deriv_approx(x, d * k).0.norm())
        .fold(0.0, f64::max)
}

/// Conjugates F_k on ξ-grids and checks F_k* = F* inside the ball |z| < k
/// and F_k* = +∞ outside.
///
/// Inside, the grid maximum must lie in [F* − (k + |z|)·c, F*] with c the
/// grid covering radius. Outside, at |z| = 2k, the grid maximum over the
/// ball of radius R must exceed (R − 2c)(|z| − k) − (|z| + k)·c, a bound that
/// grows linearly in R, for R, 2R and 4R.
pub fn fk_star_certificate(rk: &RestrictedConjugate, samples: usize) -> Certificate {
    let f = rk.base();
    let n = f.dim();
    let k = rk.k();
    let resolution = if n == 1 { 4096 } else { 128 };
    let mut cert = Certificate::new("fk-star");
    let mut inside = CheckResult::new("inside-ball");
    let mut outside = CheckResult::new("outside-ball");
    let mut origin = CheckResult::new("origin");
    let mut growth = CheckResult::new("unbounded-growth");

    let pts = probe_points(n, 1);
    for x in [pts[pts.len() - 2], pts[pts.len() - 1]] {
        let r0 = (2.0 * coincidence_radius(f, x, k)).max(1.0);
        let grid = match GridConjugate::tabulate(rk, x, r0, resolution) {
            Ok(g) => g,
            Err(e) => {
                inside.fail(format!("tabulation failed at x = {x}: {e}"));
                continue;
            }
        };
        let c = grid.covering_radius();

        let at0 = grid.eval(Vec2N::zero(n));
        origin.record(1e-14 - at0.abs(), || format!("x = {x}: F_k*(0) = {at0:e}"));

        let mut h = Halton::new(n, 3);
        for _ in 0..samples {
            let u = h.next_point();
            let z = ball_point(n, k * (1.0 - DELTA), &u[..n]);
            let truth = value_or_inf(rk.conj().eval(x, z));
            let b = grid.eval(z);
            let tol = (k + z.norm()) * c + 1e-10 * scale(truth);
            inside.record((truth + 1e-10 * scale(truth) - b).min(b - (truth - tol)), || {
                format!("x = {x}, z = {z}: grid F_k* = {b:e}, F* = {truth:e}, tolerance {tol:e}")
            });
        }

        for d in probe_directions(n, 4) {
            let z = d * (2.0 * k);
            let mut prev = f64::NEG_INFINITY;
            for m in [1.0, 2.0, 4.0] {
                let r = m * r0;
                let g = match GridConjugate::tabulate(rk, x, r, resolution) {
                    Ok(g) => g,
                    Err(e) => {
                        outside.fail(format!("tabulation failed at x = {x}, R = {r}: {e}"));
                        continue;
                    }
                };
                let c = g.covering_radius();
                let v = g.eval(z);
                let threshold = (r - 2.0 * c) * (z.norm() - k) - (z.norm() + k) * c;
                outside.record(v - threshold, || {
                    format!("x = {x}, z = {z}, R = {r}: grid F_k* = {v:e} below {threshold:e}")
                });
                growth.record(v - prev, || format!("x = {x}, z = {z}: value did not grow at R = {r}"));
                prev = v;
            }
        }
    }
    cert.push(inside);
    cert.push(outside);
    cert.push(growth);
    cert.push(origin);
    cert
}

/// Both directions of the duality between superlinear growth of F and local
/// boundedness of F*, over the x-set of [`probe_points`].
///
/// (a) F*(x, z) ≥ r|z| − M_F(r) for r in `radii`, on `samples` (x, z) pairs.
/// The sampled M_F(r) is augmented with F(x, r·z/|z|) at the probe point,
/// since the inequality is derived from exactly that value.
///
/// (b) When min F(x, ξ)/|ξ| over |ξ| = r is at least k (ratios along rays
/// are nondecreasing, so this covers all |ξ| ≥ r), then
/// sup_{|z|≤k} F*(x, z) ≤ k·r. Checked for k ∈ {1, 2, 4, …} up to the
/// measured ratio and for k equal to the ratio itself.
pub fn superlinear_dual_probe(f: &EnergyDensity, conj: &ConjugateHandle, radii: &[f64], samples: usize) -> Certificate {
    let n = f.dim();
    let mut cert = Certificate::new("dual-probe");

    let mut lower = CheckResult::new("conjugate-lower-bound");
    for &r in radii {
        let m_sampled = local_bound_mf(f, r, 1000);
        let mut h = Halton::new(2 * n, 5);
        let per_radius = (samples / radii.len().max(1)).max(1);
        for _ in 0..per_radius {
            let u = h.next_point();
            let x = omega_point(n, &u[..n]);
            let z = ball_point(n, 3.0 * r.max(1.0), &u[n..2 * n]);
            let m = match z.unit() {
                Some(d) => m_sampled.max(f.eval(x, d * r)),
                None => m_sampled,
            };
            let bound = r * z.norm() - m;
            let v = value_or_inf(conj.eval(x, z));
            lower.record(v - bound + 1e-12 * scale(bound), || {
                format!("r = {r}, x = {x}, z = {z}: F* = {v:e} < r|z| − M_F(r) = {bound:e}")
            });
        }
    }
    cert.push(lower);

    let mut upper = CheckResult::new("local-boundedness");
    let xs = probe_points(n, 32);
    let dirs = if f.flags().radial_in_xi { probe_directions(n, 1)[..1].to_vec() } else { probe_directions(n, 64) };
    for &r in radii {
        let ratio = xs
            .iter()
            .flat_map(|&x| dirs.iter().map(move |&d| (x, d)))
            .map(|(x, d)| f.eval(x, d * r) / r)
            .fold(f64::INFINITY, f64::min);
        let mut ks: Vec<f64> = (0..8).map(|j| 2f64.powi(j)).filter(|&k| k <= ratio).collect();
        ks.push(ratio);
        for k in ks {
            let m = xs
                .iter()
                .map(|&x| conjugate_sup_at(conj, x, k, None))
                .fold(ExtReal::Finite(0.0), |a, b| if b > a { b } else { a });
            let m = value_or_inf(m);
            upper.record(k * r - m + 1e-12 * scale(k * r), || {
                format!("r = {r}, ratio {ratio:e}, k = {k}: M_F*(k) = {m:e} > k·r = {:e}", k * r)
            });
        }
    }
    cert.push(upper);
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;

    #[test]
    fn quadratic_fenchel_certificate_passes() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let cert = fenchel_certificate(&f, &ConjugateHandle::analytic(&f), 3.0, 2000);
        assert!(cert.passed(), "{}", cert.summary());
    }

    #[test]
    fn corrupted_conjugate_breaks_fenchel_identity() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let bad = f.clone().with_corrupted_derivative(1.5);
        let cert = fenchel_certificate(&bad, &ConjugateHandle::analytic(&f), 3.0, 2000);
        assert!(!cert.check("fenchel-identity").unwrap().passed);
    }

    #[test]
    fn huber_star_certificate_passes() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let rk = RestrictedConjugate::analytic(&f, 1.0).unwrap();
        let cert = fk_star_certificate(&rk, 50);
        assert!(cert.passed(), "{}", cert.summary());
        // z = (0.5, 0): the grid maximum is attained at the node ξ = z
        let g = GridConjugate::tabulate(&rk, Vec2N::new2(0.5, 0.5), 2.0, 128).unwrap();
        assert!((g.eval(Vec2N::new2(0.5, 0.0)) - 0.125).abs() < 1e-14);
    }

    #[test]
    fn dual_probe_passes_for_quadratic_and_double_phase() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let cert = superlinear_dual_probe(&f, &ConjugateHandle::analytic(&f), &[1.0, 4.0, 16.0], 3000);
        assert!(cert.passed(), "{}", cert.summary());
        let dp = EnergyDensity::double_phase(2, 2.0, 3.0, CoefficientField::constant(1.0)).unwrap();
        let cert = superlinear_dual_probe(&dp, &ConjugateHandle::analytic(&dp), &[1.0, 2.0], 3000);
        assert!(cert.passed(), "{}", cert.summary());
    }

    #[test]
    fn quadratic_lower_bound_example() {
        // F*(3, 0) = 4.5 ≥ 1·3 − ½
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let v = ConjugateHandle::analytic(&f).eval(Vec2N::new2(0.5, 0.5), Vec2N::new2(3.0, 0.0));
        assert_eq!(v, ExtReal::Finite(4.5));
        assert!(4.5 >= 3.0 - local_bound_mf(&f, 1.0, 10_000));
    }
}
