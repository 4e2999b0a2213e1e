//! Evaluable conjugates F*(x, ·): closed forms, radial tables and grid maxima.

use super::sampled::{conjugate_1d, linspace, SampledConvex1D};
use super::LegendreError;
use crate::energy::{Density, EnergyDensity};
use crate::sampling::{omega_point, Halton};
use crate::vector::{ExtReal, Vec2N};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateKind {
    /// Evaluated from the density's own formulas: a closed form, a radial
    /// root-find of f'(ρ) = |z|, or Newton on F'(ξ) = z.
    Analytic,
    /// Discrete Legendre transform of the sampled radial profile.
    Radial1dGrid,
    /// Maximum of z·ξ − F(ξ) over a grid in a ξ-ball.
    NdGrid,
}

/// Resolution of a tabulated radial conjugate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialGrid {
    /// Samples on the half-window [0, R]; the table has 2·nodes − 1 entries.
    pub nodes: usize,
    /// The window R is grown until f'(R) reaches this slope.
    pub max_slope: f64,
}

impl RadialGrid {
    /// A window wide enough for restricted conjugates up to radius `k`.
    pub fn for_k(k: f64) -> Self {
        Self { nodes: 2001, max_slope: 4.0 * k }
    }
}

/// sup over a ξ-grid of z·ξ − D(x, ξ) for a frozen x.
///
/// Grid points fill the closed ball of radius `radius` on a cube lattice
/// with an even number of intervals per axis, so ξ = 0 is a node. The result
/// is a lower bound for the true conjugate; for a density that is
/// L-Lipschitz on the ball the gap at z with maximizer inside the ball is at
/// most (L + |z|)·spacing·√n / 2.
#[derive(Clone, Debug)]
pub struct GridConjugate {
    x: Vec2N,
    dim: usize,
    radius: f64,
    spacing: f64,
    points: Vec<Vec2N>,
    values: Vec<f64>,
}

impl GridConjugate {
    /// Tabulates `f(x, ·)`; `resolution` intervals per axis (rounded up to even).
    pub fn tabulate<D: Density + ?Sized>(f: &D, x: Vec2N, radius: f64, resolution: usize) -> Result<Self, LegendreError> {
        if resolution < 64 {
            return Err(LegendreError::Resolution(resolution));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LegendreError::BadRadius(radius));
        }
        let m = resolution + resolution % 2;
        let dim = f.dim();
        let spacing = 2.0 * radius / m as f64;
        let coord = |i: usize| -radius + i as f64 * spacing;
        let mut points = Vec::new();
        if dim == 1 {
            points.extend((0..=m).map(|i| Vec2N::new1(coord(i))));
        } else {
            for j in 0..=m {
                for i in 0..=m {
                    let p = Vec2N::new2(coord(i), coord(j));
                    if p.norm() <= radius * (1.0 + 1e-12) {
                        points.push(p);
                    }
                }
            }
        }
        // the centre node is exactly zero even when the lattice arithmetic is not
        for p in points.iter_mut() {
            if p.max_abs() < 0.5 * spacing {
                *p = Vec2N::zero(dim);
            }
        }
        let values = points.iter().map(|&p| f.value(x, p)).collect();
        Ok(Self { x, dim, radius, spacing, points, values })
    }

    pub fn x(&self) -> Vec2N {
        self.x
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest distance from a point of the ball to its nearest grid node.
    pub fn covering_radius(&self) -> f64 {
        0.5 * self.spacing * (self.dim as f64).sqrt()
    }

    /// Grid maximum and its maximizer.
    pub fn eval_with_argmax(&self, z: Vec2N) -> (f64, Vec2N) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = Vec2N::zero(self.dim);
        for (p, v) in self.points.iter().zip(&self.values) {
            let c = z.dot(p) - v;
            if c > best {
                best = c;
                arg = *p;
            }
        }
        (best, arg)
    }

    pub fn eval(&self, z: Vec2N) -> f64 {
        self.eval_with_argmax(z).0
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Exact,
    RadialTable { x: Vec2N, grid: RadialGrid, table: Arc<SampledConvex1D> },
    Grid { table: Arc<GridConjugate>, resolution: usize },
}

/// An evaluable conjugate F*(x, z) of an energy density.
///
/// Grid-backed handles are tabulated at one point x; evaluating them at
/// another x rebuilds the table for that point (correct but slow).
#[derive(Clone, Debug)]
pub struct ConjugateHandle {
    kind: ConjugateKind,
    source: EnergyDensity,
    repr: Repr,
}

impl ConjugateHandle {
    /// The conjugate evaluated from the density's formulas.
    pub fn analytic(f: &EnergyDensity) -> Self {
        Self { kind: ConjugateKind::Analytic, source: f.clone(), repr: Repr::Exact }
    }

    pub fn kind(&self) -> ConjugateKind {
        self.kind
    }

    pub fn source(&self) -> &EnergyDensity {
        &self.source
    }

    /// Radius beyond which values are extrapolated (∞ for exact handles).
    pub fn domain_radius(&self) -> f64 {
        match &self.repr {
            Repr::Exact => f64::INFINITY,
            Repr::RadialTable { table, .. } => table.window().1,
            Repr::Grid { table, .. } => table.radius(),
        }
    }

    /// F*(x, z). Finite for every zoo energy; `PosInf` only arises from
    /// tables whose input had affine tails.
    pub fn eval(&self, x: Vec2N, z: Vec2N) -> ExtReal {
        match &self.repr {
            Repr::Exact => ExtReal::Finite(exact_conjugate(&self.source, x, z)),
            Repr::RadialTable { x: x0, grid, table } => {
                if *x0 == x {
                    table.eval(z.norm())
                } else {
                    match radial_table(&self.source, x, *grid) {
                        Ok(t) => t.eval(z.norm()),
                        Err(_) => ExtReal::Finite(exact_conjugate(&self.source, x, z)),
                    }
                }
            }
            Repr::Grid { table, resolution } => {
                if table.x() == x {
                    ExtReal::Finite(table.eval(z))
                } else {
                    let t = GridConjugate::tabulate(&self.source, x, table.radius(), *resolution)
                        .expect("parameters were validated at construction");
                    ExtReal::Finite(t.eval(z))
                }
            }
        }
    }

    /// f*(x, s) for radial sources: the conjugate along any ray at |z| = s.
    pub fn eval_radial(&self, x: Vec2N, s: f64) -> ExtReal {
        let dim = self.source.dim();
        let z = if dim == 1 { Vec2N::new1(s) } else { Vec2N::new2(s, 0.0) };
        self.eval(x, z)
    }

    /// Whether the handle belongs to this energy (same kind and parameters).
    pub fn matches(&self, f: &EnergyDensity) -> bool {
        self.source.kind() == f.kind()
            && self.source.dim() == f.dim()
            && self.source.params() == f.params()
            && self.source.coefficients() == f.coefficients()
    }
}

fn exact_conjugate(f: &EnergyDensity, x: Vec2N, z: Vec2N) -> f64 {
    if let Some(prof) = f.radial_profile(x) {
        return prof.conjugate(z.norm());
    }
    // any ξ gives a lower bound; at the Newton root it is the value
    let (xi, _) = f.inverse_deriv_approx(x, z);
    (z.dot(&xi) - f.eval(x, xi)).max(0.0)
}

fn radial_table(f: &EnergyDensity, x: Vec2N, grid: RadialGrid) -> Result<SampledConvex1D, LegendreError> {
    let prof = f.radial_profile(x).ok_or_else(|| LegendreError::NotRadial(f.name().to_string()))?;
    let mut r = 1.0_f64;
    while prof.slope(r) < grid.max_slope {
        r *= 2.0;
    }
    let half = grid.nodes.max(3);
    let ts = linspace(-r, r, 2 * half - 1);
    let ys = ts.iter().map(|t| prof.value(t.abs())).collect();
    let samples = SampledConvex1D::new(ts, ys, ExtReal::PosInf, ExtReal::PosInf)?;
    conjugate_1d(&samples)
}

/// F*(x, z) = f*(x, |z|) through the discrete transform of the even
/// extension of the radial profile, sampled on a window [−R, R] with
/// f'(R) ≥ `grid.max_slope`.
pub fn conjugate_radial(f: &EnergyDensity, x: Vec2N, grid: RadialGrid) -> Result<ConjugateHandle, LegendreError> {
    if !f.flags().radial_in_xi {
        return Err(LegendreError::NotRadial(f.name().to_string()));
    }
    let table = Arc::new(radial_table(f, x, grid)?);
    Ok(ConjugateHandle {
        kind: ConjugateKind::Radial1dGrid,
        source: f.clone(),
        repr: Repr::RadialTable { x, grid, table },
    })
}

/// Grid-maximum conjugate over ξ in the ball of radius `box_radius`.
///
/// Oracle-grade: O(resolutionⁿ) per query. `resolution` ≥ 64.
pub fn conjugate_nd_bruteforce(
    f: &EnergyDensity,
    x: Vec2N,
    box_radius: f64,
    resolution: usize,
) -> Result<ConjugateHandle, LegendreError> {
    let table = Arc::new(GridConjugate::tabulate(f, x, box_radius, resolution)?);
    Ok(ConjugateHandle {
        kind: ConjugateKind::NdGrid,
        source: f.clone(),
        repr: Repr::Grid { table, resolution },
    })
}

/// Directions used for sup/inf probes over spheres: `count` equispaced
/// angles (including both axes when `count` is a multiple of 4), or ±1 in 1D.
pub fn probe_directions(dim: usize, count: usize) -> Vec<Vec2N> {
    if dim == 1 {
        return vec![Vec2N::new1(1.0), Vec2N::new1(-1.0)];
    }
    (0..count.max(1))
        .map(|i| Vec2N::polar(2, 1.0, 2.0 * std::f64::consts::PI * i as f64 / count as f64))
        .collect()
}

/// sup_{|z|≤k} F*(x, z) at one x, over the probe directions plus `extra`.
///
/// F*(x, ·) is convex with minimum 0 at the origin, so it is nondecreasing
/// along rays and the supremum sits on the sphere |z| = k. For radial
/// sources one direction is exact.
pub fn conjugate_sup_at(conj: &ConjugateHandle, x: Vec2N, k: f64, extra: Option<Vec2N>) -> ExtReal {
    let dim = conj.source().dim();
    let dirs = if conj.source().flags().radial_in_xi {
        probe_directions(dim, 1)[..1].to_vec()
    } else {
        probe_directions(dim, 64)
    };
    let mut best = ExtReal::Finite(0.0);
    for d in dirs.into_iter().chain(extra.and_then(|e| e.unit())) {
        let v = conj.eval(x, d * k);
        if v > best {
            best = v;
        }
    }
    best
}

/// Sample points of Ω for sup/inf probes: the corners, the centre, and a
/// Halton stream. Including corners catches coefficients extremal on ∂Ω.
pub fn probe_points(dim: usize, halton: usize) -> Vec<Vec2N> {
    let mut pts = if dim == 1 {
        vec![Vec2N::new1(0.0), Vec2N::new1(1.0), Vec2N::new1(0.5)]
    } else {
        vec![
            Vec2N::new2(0.0, 0.0),
            Vec2N::new2(1.0, 0.0),
            Vec2N::new2(0.0, 1.0),
            Vec2N::new2(1.0, 1.0),
            Vec2N::new2(0.5, 0.5),
        ]
    };
    let mut h = Halton::new(dim, 7);
    for _ in 0..halton {
        let u = h.next_point();
        pts.push(omega_point(dim, &u[..dim]));
    }
    pts
}

/// Estimate of M_{F*}(k) = sup_{x∈Ω, |z|<k} F*(x, z) over [`probe_points`].
pub fn conjugate_local_bound(conj: &ConjugateHandle, k: f64, halton: usize) -> ExtReal {
    let dim = conj.source().dim();
    let mut best = ExtReal::Finite(0.0);
    for x in probe_points(dim, halton) {
        let v = conjugate_sup_at(conj, x, k, None);
        if v > best {
            best = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::energy::make_energy;
    use std::collections::BTreeMap;

    fn finite(v: ExtReal) -> f64 {
        v.finite().expect("finite conjugate")
    }

    #[test]
    fn quadratic_is_self_conjugate() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let x = Vec2N::new2(0.3, 0.4);
        let z = Vec2N::new2(1.0, 1.0);
        assert!((finite(ConjugateHandle::analytic(&f).eval(x, z)) - 1.0).abs() < 1e-15);
        let radial = conjugate_radial(&f, x, RadialGrid::for_k(4.0)).unwrap();
        assert!((finite(radial.eval(x, z)) - 1.0).abs() < 1e-5);
        assert_eq!(radial.kind(), ConjugateKind::Radial1dGrid);
    }

    #[test]
    fn three_halves_power_satisfies_young_equality() {
        let f = EnergyDensity::power(2, 1.5).unwrap();
        let conj = conjugate_radial(&f, Vec2N::new2(0.5, 0.5), RadialGrid { nodes: 20001, max_slope: 8.0 }).unwrap();
        let x = Vec2N::new2(0.5, 0.5);
        for xi in [Vec2N::new2(0.3, -0.2), Vec2N::new2(1.0, 2.0), Vec2N::new2(-4.0, 1.0)] {
            let z = f.deriv(x, xi);
            let gap = f.eval(x, xi) + finite(conj.eval(x, z)) - xi.dot(&z);
            assert!(gap.abs() < 1e-6 * (1.0 + xi.dot(&z)), "gap {gap} at {xi}");
        }
    }

    #[test]
    fn conjugate_vanishes_at_origin() {
        for name in ["power_p", "anisotropic_double_phase"] {
            let params = BTreeMap::from([("p".to_string(), 2.0), ("q".to_string(), 4.0)]);
            let params = if name == "power_p" { BTreeMap::from([("p".to_string(), 2.0)]) } else { params };
            let coeffs = if name == "power_p" {
                BTreeMap::new()
            } else {
                BTreeMap::from([("a".to_string(), CoefficientField::constant(1.0))])
            };
            let f = make_energy(name, 2, &params, coeffs).unwrap();
            let x = Vec2N::new2(0.2, 0.7);
            let zero = Vec2N::zero(2);
            assert_eq!(ConjugateHandle::analytic(&f).eval(x, zero), ExtReal::Finite(0.0));
            let brute = conjugate_nd_bruteforce(&f, x, 4.0, 64).unwrap();
            assert_eq!(brute.eval(x, zero), ExtReal::Finite(0.0));
        }
    }

    #[test]
    fn bruteforce_quadratic_within_two_spacings() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let x = Vec2N::new2(0.5, 0.5);
        let brute = conjugate_nd_bruteforce(&f, x, 8.0, 64).unwrap();
        let h = 16.0 / 64.0;
        let v = finite(brute.eval(x, Vec2N::new2(2.0, 0.0)));
        assert!((v - 2.0).abs() <= 2.0 * h);
        assert_eq!(brute.domain_radius(), 8.0);
    }

    #[test]
    fn bruteforce_agrees_with_radial_table_for_pure_power_double_phase() {
        let f = EnergyDensity::double_phase(2, 2.0, 3.0, CoefficientField::constant(0.0)).unwrap();
        let x = Vec2N::new2(0.1, 0.9);
        let brute = conjugate_nd_bruteforce(&f, x, 6.0, 128).unwrap();
        let radial = conjugate_radial(&f, x, RadialGrid::for_k(8.0)).unwrap();
        let h = 12.0 / 128.0;
        for z in [Vec2N::new2(1.0, 0.5), Vec2N::new2(-3.0, 2.0), Vec2N::new2(0.0, -6.0)] {
            let (a, b) = (finite(brute.eval(x, z)), finite(radial.eval(x, z)));
            assert!((a - b).abs() <= 2.0 * h, "z = {z}: {a} vs {b}");
            assert!(a <= b + 1e-9, "grid maximum must stay below the conjugate");
        }
    }

    #[test]
    fn radial_conjugate_rejects_anisotropic_energy() {
        let f = make_energy(
            "anisotropic_double_phase",
            2,
            &BTreeMap::from([("p".to_string(), 2.0), ("q".to_string(), 4.0)]),
            BTreeMap::from([("a".to_string(), CoefficientField::constant(1.0))]),
        )
        .unwrap();
        assert!(matches!(
            conjugate_radial(&f, Vec2N::new2(0.5, 0.5), RadialGrid::for_k(1.0)),
            Err(LegendreError::NotRadial(_))
        ));
        assert!(matches!(
            conjugate_nd_bruteforce(&f, Vec2N::new2(0.5, 0.5), 2.0, 32),
            Err(LegendreError::Resolution(32))
        ));
    }

    #[test]
    fn quadratic_conjugate_local_bound() {
        let f = EnergyDensity::power(2, 2.0).unwrap();
        let conj = ConjugateHandle::analytic(&f);
        for k in [0.5, 1.0, 3.0] {
            assert!((finite(conjugate_local_bound(&conj, k, 16)) - 0.5 * k * k).abs() < 1e-14);
        }
    }
}
