//! Invariants as randomized properties: convexity and exact gradients of the
//! discrete energies, the restricted conjugate's envelope and Lipschitz
//! bounds, Fenchel's inequality, projections, and file round trips.

use fenchelkit::discretize::{
    energy, energy_gradient, read_binary, read_csv, write_binary, write_csv, ConstraintSet, FieldData, FieldKind, Grid,
    ScalarField,
};
use fenchelkit::expr::Expr;
use fenchelkit::legendre::{conjugate_1d, conjugate_at_sorted, SampledConvex1D};
use fenchelkit::{zoo, ConjugateHandle, EnergyDensity, RestrictedConjugate, Vec2N};
use proptest::prelude::*;

fn member(dim: usize, idx: usize) -> EnergyDensity {
    let z = zoo(dim);
    z[idx % z.len()].clone()
}

fn vec2() -> impl Strategy<Value = Vec2N> {
    (-4.0..4.0f64, -4.0..4.0f64).prop_map(|(a, b)| Vec2N::new2(a, b))
}

fn point() -> impl Strategy<Value = Vec2N> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| Vec2N::new2(a, b))
}

fn field(g: Grid, vals: &[f64]) -> ScalarField {
    ScalarField::new(g, vals[..g.node_count()].to_vec()).unwrap()
}

fn node_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restricted_conjugate_is_a_k_lipschitz_minorant(
        idx in 0usize..6, k in 0.5..8.0f64, x in point(), a in vec2(), b in vec2()
    ) {
        let f = member(2, idx);
        let rk = RestrictedConjugate::analytic(&f, k).unwrap();
        let (fa, fb) = (rk.eval(x, a), rk.eval(x, b));
        let scale = 1.0 + fa.abs().max(fb.abs());
        prop_assert!(fa <= f.eval(x, a) + 1e-9 * scale);
        prop_assert!((fa - fb).abs() <= k * (a - b).norm() + 1e-9 * scale);
        prop_assert!(rk.deriv(x, a).norm() <= k * (1.0 + 1e-9));
        // midpoint convexity
        let mid = rk.eval(x, (a + b) * 0.5);
        prop_assert!(mid <= 0.5 * (fa + fb) + 1e-9 * scale);
    }

    #[test]
    fn restricted_conjugates_increase_with_k(idx in 0usize..6, k in 0.5..8.0f64, x in point(), xi in vec2()) {
        let f = member(2, idx);
        let small = RestrictedConjugate::analytic(&f, k).unwrap().eval(x, xi);
        let large = RestrictedConjugate::analytic(&f, 2.0 * k).unwrap().eval(x, xi);
        prop_assert!(small <= large + 1e-9 * (1.0 + large.abs()));
    }

    #[test]
    fn restricted_conjugate_coincides_inside(idx in 0usize..6, x in point(), xi in vec2()) {
        let f = member(2, idx);
        // any k above |F'(ξ)| puts ξ in the coincidence region
        let k = 1.5 * f.deriv(x, xi).norm() + 0.5;
        let rk = RestrictedConjugate::analytic(&f, k).unwrap();
        let v = f.eval(x, xi);
        prop_assert!((rk.eval(x, xi) - v).abs() <= 1e-8 * (1.0 + v.abs()));
        prop_assert!((rk.deriv(x, xi) - f.deriv(x, xi)).norm() <= 1e-6 * (1.0 + k));
    }

    #[test]
    fn fenchel_young_inequality(n in 1usize..=2, idx in 0usize..6, x in point(), xi in vec2(), z in vec2()) {
        let f = member(n, idx);
        let (x, xi, z) = if n == 1 { (Vec2N::new1(x.x1()), Vec2N::new1(xi.x1()), Vec2N::new1(z.x1())) } else { (x, xi, z) };
        let conj = ConjugateHandle::analytic(&f);
        let lhs = xi.dot(&z);
        // +∞ satisfies the inequality trivially
        if let Some(v) = conj.eval(x, z).finite() {
            let rhs = f.eval(x, xi) + v;
            prop_assert!(rhs >= lhs - 1e-12 * (1.0 + lhs.abs().max(rhs.abs())), "{rhs} < {lhs}");
        }
    }

    #[test]
    fn discrete_energy_is_convex(n in 1usize..=2, idx in 0usize..6, u in node_values(81), v in node_values(81)) {
        let g = Grid::new(n, 8).unwrap();
        let f = member(n, idx);
        let (u, v) = (field(g, &u), field(g, &v));
        let mid = u.axpy(1.0, &v);
        let mid = ScalarField::new(g, mid.values().iter().map(|m| 0.5 * m).collect()).unwrap();
        let (eu, ev, em) = (energy(&g, &f, &u).unwrap(), energy(&g, &f, &v).unwrap(), energy(&g, &f, &mid).unwrap());
        prop_assert!(em <= 0.5 * (eu + ev) + 1e-12 * (1.0 + eu.abs() + ev.abs()));
    }

    #[test]
    fn energy_gradient_matches_directional_difference(
        n in 1usize..=2, idx in 0usize..6, u in node_values(81), d in node_values(81)
    ) {
        let g = Grid::new(n, 8).unwrap();
        let f = member(n, idx);
        let u = field(g, &u);
        // directions vanish on the boundary, matching the zeroed gradient rows
        let mut d = field(g, &d);
        for b in g.boundary_nodes() {
            d.values_mut()[b] = 0.0;
        }
        let grad = energy_gradient(&g, &f, &u).unwrap();
        let h = 1e-6;
        let fd = (energy(&g, &f, &u.axpy(h, &d)).unwrap() - energy(&g, &f, &u.axpy(-h, &d)).unwrap()) / (2.0 * h);
        let an = grad.dot(&d);
        prop_assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "fd {fd} vs {an}");
    }

    #[test]
    fn restricted_energies_exhaust_monotonically(idx in 0usize..6, k in 0.25..4.0f64, u in node_values(81)) {
        let g = Grid::new(2, 8).unwrap();
        let f = member(2, idx);
        let u = field(g, &u).axpy(3.0, &field(g, &u));
        let small = energy(&g, &RestrictedConjugate::analytic(&f, k).unwrap(), &u).unwrap();
        let large = energy(&g, &RestrictedConjugate::analytic(&f, 2.0 * k).unwrap(), &u).unwrap();
        let full = energy(&g, &f, &u).unwrap();
        let tol = 1e-10 * (1.0 + full.abs());
        prop_assert!(small <= large + tol && large <= full + tol, "{small} {large} {full}");
    }

    #[test]
    fn obstacle_projection_is_an_idempotent_contraction(u in node_values(81), v in node_values(81), lift in 0.0..0.5f64) {
        let g = Grid::new(2, 8).unwrap();
        let psi: Vec<Option<f64>> =
            (0..g.node_count()).map(|p| (!g.is_boundary(p)).then(|| lift - (g.node_point(p) - Vec2N::new2(0.5, 0.5)).norm())).collect();
        let k = ConstraintSet::obstacle(ScalarField::zeros(g), psi).unwrap();
        let (u, v) = (field(g, &u), field(g, &v));
        let (pu, pv) = (k.project(&u), k.project(&v));
        prop_assert!(k.contains(&pu, 0.0));
        prop_assert_eq!(k.project(&pu), pu.clone());
        prop_assert!(pu.dist_inf(&pv) <= u.dist_inf(&v) + 1e-15);
    }

    #[test]
    fn discrete_legendre_transform_is_the_node_maximum(
        centers in prop::collection::vec(-2.0..2.0f64, 1..5), weights in prop::collection::vec(0.0..2.0f64, 5),
        slopes in prop::collection::vec(-6.0..6.0f64, 1..20), n in 3usize..200
    ) {
        let f = SampledConvex1D::from_fn(-3.0, 3.0, n, |t| {
            0.25 * t * t + centers.iter().zip(&weights).map(|(c, w)| w * (t - c).abs()).sum::<f64>()
        }).unwrap();
        let conj = conjugate_1d(&f).unwrap();
        let mut slopes = slopes;
        slopes.sort_by(f64::total_cmp);
        let merged = conjugate_at_sorted(&f, &slopes);
        for (s, m) in slopes.iter().zip(merged) {
            let brute = f.abscissae().iter().zip(f.values()).map(|(x, y)| s * x - y).fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * (1.0 + brute.abs());
            prop_assert!((m.to_f64() - brute).abs() <= tol);
            prop_assert!((conj.eval(*s).to_f64() - brute).abs() <= tol, "s = {s}");
        }
    }

    #[test]
    fn expressions_evaluate_like_rust(a in -5.0..5.0f64, b in -5.0..5.0f64, x in point()) {
        let src = format!("{a:?}*x1 + ({b:?})*x2^2 - max(x1, x2)/(1 + abs(x2))");
        let e = Expr::parse(&src).unwrap();
        let want = a * x.x1() + b * x.x2().powi(2) - x.x1().max(x.x2()) / (1.0 + x.x2().abs());
        prop_assert!((e.eval(x) - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn field_files_round_trip_bit_exactly(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 25)) {
        let g = Grid::new(2, 4).unwrap();
        let data = FieldData::from_scalar(&ScalarField::new(g, vals).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let (c, b) = (dir.path().join("f.csv"), dir.path().join("f.bin"));
        write_csv(&c, &data).unwrap();
        write_binary(&b, &data).unwrap();
        let from_csv = read_csv(&c, FieldKind::Node).unwrap();
        let from_bin = read_binary(&b).unwrap();
        for ((x, y), z) in data.values.iter().zip(&from_csv.values).zip(&from_bin.values) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
            prop_assert_eq!(x.to_bits(), z.to_bits());
        }
    }
}
