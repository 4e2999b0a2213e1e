//! Acceptance suite: ten criteria at their stated tolerances, one PASS/FAIL
//! line each. Runs without the libtest harness so the lines always print;
//! exits nonzero if any criterion fails.

use fenchelkit::discretize::gradient;
use fenchelkit::extension::{
    absolute_quotient_claim, extension_certificate, h_via_inverse_map, one_sided_quotient_gap, InverseMaps, SampleSpec,
};
use fenchelkit::legendre::{fenchel_certificate, fk_star_certificate, superlinear_dual_probe};
use fenchelkit::sampling::SplitMix64;
use fenchelkit::solver::eta_battery;
use fenchelkit::{zoo, Certificate, ConjugateHandle, EnergyDensity, RestrictedConjugate, Vec2N};
use fenchelkit_cli::commands::{read_report, ReportFile};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64()))
    }
}

fn failed_checks(certs: &[Certificate]) -> Vec<String> {
    certs
        .iter()
        .flat_map(|c| c.checks.iter().filter(|k| !k.passed).map(move |k| format!("{}/{} ({:e})", c.title, k.name, k.worst_margin)))
        .collect()
}

fn solve_bundled(name: &str, dir: &Path) -> Result<ReportFile, String> {
    let out = dir.join(name);
    let o = Command::new(env!("CARGO_BIN_EXE_fenchelkit"))
        .args(["solve", "--quiet", "--config", &format!("bundled:{name}"), "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.code() != Some(0) {
        return Err(format!("solve exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    read_report(&out.join("report.json")).map_err(|e| e.to_string())
}

/// Tridiagonal solve a_i x_{i−1} + b_i x_i + c_i x_{i+1} = d_i.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let (mut cp, mut dp) = (vec![0.0; n], vec![0.0; n]);
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Node values minimizing ½∫|u'|² with zero boundary values and u ≥ ψ,
/// by primal-dual active sets; returns (u, contact flags).
fn obstacle_qp(cells: usize, psi: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let n = cells - 1;
    let mut active = vec![false; n];
    let mut u = vec![0.0; n];
    for _ in 0..500 {
        let (mut a, mut b, mut c, mut d) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            if active[i] {
                b[i] = 1.0;
                d[i] = psi[i];
            } else {
                b[i] = 2.0;
                if i > 0 {
                    a[i] = -1.0;
                }
                if i + 1 < n {
                    c[i] = -1.0;
                }
            }
        }
        u = thomas(&a, &b, &c, &d);
        let at = |i: isize| if i < 0 || i as usize >= n { 0.0 } else { u[i as usize] };
        let next: Vec<bool> =
            (0..n).map(|i| 2.0 * u[i] - at(i as isize - 1) - at(i as isize + 1) + (psi[i] - u[i]) > 0.0).collect();
        if next == active {
            break;
        }
        active = next;
    }
    let mut full = vec![0.0];
    full.extend(&u);
    full.push(0.0);
    let mut contact = vec![false];
    contact.extend(&active);
    contact.push(false);
    (full, contact)
}

fn huber_closed_form() -> Verdict {
    let start = Instant::now();
    let f = EnergyDensity::power(2, 2.0).unwrap();
    let rk = RestrictedConjugate::analytic(&f, 1.0).unwrap();
    let x = Vec2N::new2(0.5, 0.5);
    let mut rng = SplitMix64::new(1);
    let points: Vec<Vec2N> = (0..1000)
        .map(|i| {
            // a third of the points straddle the sphere |ξ| = 1
            let r = if i % 3 == 0 { 1.0 + rng.uniform(-1e-3, 1e-3) } else { rng.uniform(0.0, 3.0) };
            Vec2N::polar(2, r, rng.uniform(0.0, std::f64::consts::TAU))
        })
        .collect();
    let huber = |xi: Vec2N| if xi.norm() <= 1.0 { 0.5 * xi.norm_sq() } else { xi.norm() - 0.5 };
    let (mut err_f, mut err_h) = (0.0f64, 0.0f64);
    for &xi in &points {
        err_f = err_f.max((rk.eval(x, xi) - huber(xi)).abs());
        err_h = err_h.max((rk.deriv(x, xi) - xi.clamp_norm(1.0)).norm());
    }
    // brute-force sup of ξ·z − ½|z|² over a 400 × 250 polar grid of the closed unit ball
    let (na, nr) = (400usize, 250usize);
    let ball: Vec<Vec2N> = (0..na)
        .flat_map(|a| (1..=nr).map(move |r| Vec2N::polar(2, r as f64 / nr as f64, std::f64::consts::TAU * a as f64 / na as f64)))
        .collect();
    let cover = ((0.5 / nr as f64).powi(2) + (std::f64::consts::PI / na as f64).powi(2)).sqrt();
    let mut oracle_gap = 0.0f64;
    let mut oracle_ok = true;
    for &xi in &points {
        let brute = ball.iter().map(|z| xi.dot(z) - 0.5 * z.norm_sq()).fold(0.0f64, f64::max);
        let fk = rk.eval(x, xi);
        let gap = fk - brute;
        oracle_gap = oracle_gap.max(gap);
        // the grid sup lies below the true sup by at most (|ξ| + 1)·covering radius
        oracle_ok &= gap >= -1e-12 && gap <= (xi.norm() + 1.0) * cover;
    }
    within(start.elapsed(), 5.0)?;
    check(
        err_f <= 1e-8 && err_h <= 1e-6 && oracle_ok,
        format!("max |F_k − huber| {err_f:.2e}, max |H − clamp| {err_h:.2e}, brute-force gap ≤ {oracle_gap:.2e} (10⁵ ball points)"),
    )
}

fn zoo_extension_certificates() -> Verdict {
    let start = Instant::now();
    let mut certs = Vec::new();
    for f in zoo(2) {
        for k in [1.0, 4.0, 16.0] {
            let rk = RestrictedConjugate::analytic(&f, k).map_err(|e| e.to_string())?;
            let mut ext = extension_certificate(&f, k, SampleSpec::default());
            let mut star = fk_star_certificate(&rk, 1000);
            ext.title = format!("{}@k={k}/{}", f.name(), ext.title);
            star.title = format!("{}@k={k}/{}", f.name(), star.title);
            certs.push(ext);
            certs.push(star);
        }
    }
    within(start.elapsed(), 120.0)?;
    let failed = failed_checks(&certs);
    let checks: usize = certs.iter().map(|c| c.checks.len()).sum();
    check(failed.is_empty(), format!("{checks} checks over 6 energies × k ∈ {{1, 4, 16}}, failures: {failed:?}"))
}

fn fenchel_identity() -> Verdict {
    let mut certs = Vec::new();
    for n in [1, 2] {
        for f in zoo(n) {
            let mut c = fenchel_certificate(&f, &ConjugateHandle::analytic(&f), 4.0, 10_000);
            c.title = format!("{}/{}d", f.name(), n);
            certs.push(c);
        }
    }
    let worst_id = certs.iter().filter_map(|c| c.check("fenchel-identity")).map(|k| k.worst_margin).fold(f64::INFINITY, f64::min);
    let failed = failed_checks(&certs);
    check(
        failed.is_empty(),
        format!("{} energy/dimension pairs, 10⁴ inequality triples and 10³ identity points each, worst identity slack {worst_id:.2e}, failures: {failed:?}", certs.len()),
    )
}

fn dual_growth_probes() -> Verdict {
    let mut certs = Vec::new();
    for n in [1, 2] {
        for f in zoo(n) {
            let mut c = superlinear_dual_probe(&f, &ConjugateHandle::analytic(&f), &[1.0, 4.0, 16.0], 10_000);
            c.title = format!("{}/{}d", f.name(), n);
            certs.push(c);
        }
    }
    let samples: usize = certs.iter().filter_map(|c| c.check("conjugate-lower-bound")).map(|k| k.samples).min().unwrap_or(0);
    let failed = failed_checks(&certs);
    check(failed.is_empty() && samples >= 9_999, format!("{} energies, ≥ {samples} lower-bound samples each, failures: {failed:?}", certs.len()))
}

fn quadratic_unconstrained(dir: &Path) -> Verdict {
    let start = Instant::now();
    let file = solve_bundled("quad_1d_unconstrained", dir)?;
    let elapsed = start.elapsed();
    let r = &file.report;
    let n = r.grid.cells_per_axis();
    if n != 64 {
        return Err(format!("expected N = 64, got {n}"));
    }
    let mut d = vec![0.0; n - 1];
    d[n - 2] = 1.0;
    let exact = thomas(&vec![-1.0; n - 1], &vec![2.0; n - 1], &vec![-1.0; n - 1], &d);
    let err = (1..n).map(|i| (r.u.values()[i] - exact[i - 1]).abs()).fold(0.0, f64::max);
    let energy_err = (r.primal_integral - 0.5).abs();
    let g = r.grid;
    let worst_m =
        eta_battery(&g).iter().map(|e| r.sigma.pairing(&gradient(&g, &e.eta).unwrap()).abs()).fold(0.0, f64::max);
    within(elapsed, 10.0)?;
    check(
        energy_err <= 1e-8 && err <= 1e-6 && worst_m <= 1e-8,
        format!("|I − 0.5| {energy_err:.2e}, ‖u − oracle‖∞ {err:.2e}, max |m(η)| {worst_m:.2e} over 18 bumps, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn quadratic_obstacle(dir: &Path) -> Verdict {
    let start = Instant::now();
    let file = solve_bundled("quad_1d_obstacle", dir)?;
    let elapsed = start.elapsed();
    let r = &file.report;
    let g = r.grid;
    let n = g.cells_per_axis();
    let psi: Vec<f64> = (1..n).map(|i| 0.5 - 4.0 * (i as f64 / n as f64 - 0.5).powi(2)).collect();
    let (oracle, contact) = obstacle_qp(n, &psi);
    let err = r.u.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (mut min_m, mut off_contact_max, mut off_count) = (f64::INFINITY, 0.0f64, 0);
    for e in eta_battery(&g) {
        let m = r.sigma.pairing(&gradient(&g, &e.eta).unwrap());
        min_m = min_m.min(m);
        if contact.iter().zip(e.eta.values()).all(|(&c, &v)| !c || v == 0.0) {
            off_contact_max = off_contact_max.max(m.abs());
            off_count += 1;
        }
    }
    let contacts = contact.iter().filter(|&&c| c).count();
    within(elapsed, 30.0)?;
    check(
        err <= 1e-6 && min_m >= -1e-6 && off_contact_max <= 1e-6 && contacts > 0,
        format!(
            "‖u − QP oracle‖∞ {err:.2e}, min m(η) {min_m:.2e}, max |m| off contact {off_contact_max:.2e} ({off_count} bumps), {contacts} contact nodes"
        ),
    )
}

fn double_phase_run(dir: &Path) -> Verdict {
    let start = Instant::now();
    let file = solve_bundled("double_phase_2d", dir)?;
    let elapsed = start.elapsed();
    let r = &file.report;
    let d = r.diagnostics.as_ref().ok_or("no diagnostics")?;
    let ws: std::collections::BTreeSet<&str> = d.dis_var.rows.iter().map(|row| row.w.as_str()).collect();
    let worst_dv = d.dis_var.rows.iter().map(|row| row.margin).fold(f64::INFINITY, f64::min);
    let dual_ok = d.dual.rows.iter().all(|row| row.lhs <= row.rhs && row.infinite_cells.is_empty());
    let gap = r.integrated_fenchel_gap();
    let tail = &d.sigma.fractions[d.sigma.fractions.len().saturating_sub(3)..];
    let sigma_ok = tail.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b <= a));
    within(elapsed, 300.0)?;
    check(
        ws.len() == 3 && worst_dv >= -1e-6 && dual_ok && gap <= 1e-6 && sigma_ok && r.grid.cells_per_axis() == 32,
        format!(
            "{} stages, worst dis-var margin {worst_dv:.2e} over w ∈ {ws:?}, dual LHS ≤ RHS {dual_ok}, integrated Fenchel gap {gap:.2e}, σ tail nonincreasing {sigma_ok}, {:.2}s",
            r.stages.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// The absolute-value difference-quotient inequality fails for G_k = G = ½|ξ|²;
/// the implementation instead relies on the signed chain
/// G_k'(ξ_k)·ζ ≤ (G_k(ξ_k + tζ) − G_k(ξ_k))/t ≤ G_k(ξ_k + ζ) − G_k(ξ_k),
/// which holds for every convex C¹ function and survives the limit k → ∞.
fn quotient_counterexample() -> Verdict {
    let g = EnergyDensity::power(1, 2.0).unwrap();
    let x = Vec2N::new1(0.5);
    let (xi_k, xi) = (Vec2N::new1(0.0), Vec2N::new1(1.0));
    let (lhs, rhs) = absolute_quotient_claim(&g, &g, x, xi_k, xi, xi - xi_k);
    let claim_holds = lhs <= rhs;
    let mut worst = f64::INFINITY;
    let mut rng = SplitMix64::new(8);
    let rk = RestrictedConjugate::analytic(&EnergyDensity::power(2, 2.0).unwrap(), 1.0).unwrap();
    for _ in 0..1000 {
        let a = Vec2N::new2(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
        let z = Vec2N::new2(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
        worst = worst.min(one_sided_quotient_gap(&rk, Vec2N::new2(0.5, 0.5), a, z, rng.uniform(0.01, 1.0)));
    }
    check(
        lhs == 1.0 && rhs == 0.5 && !claim_holds && worst >= -1e-12,
        format!("claim |Δ·ζ| ≤ |quotient| evaluates {claim_holds} ({lhs} > {rhs}); signed chain slack ≥ {worst:.2e} on 10³ Huber samples"),
    )
}

fn inverse_map_cross_check() -> Verdict {
    let start = Instant::now();
    let x = Vec2N::new2(0.5, 0.5);
    let mut rows = Vec::new();
    let mut ok = true;
    for p in [2.0, 4.0] {
        let f = EnergyDensity::power(2, p).unwrap();
        for k in [1.0, 4.0] {
            let rk = RestrictedConjugate::analytic(&f, k).unwrap();
            let maps = InverseMaps::new(&f, x, k).unwrap();
            // |F'(ξ)| = |ξ|^{p−1} equals k on the sphere of radius k^{1/(p−1)}
            let rk_radius = k.powf(1.0 / (p - 1.0));
            let mut rng = SplitMix64::new(9);
            let (mut worst, mut straddle) = (0.0f64, 0usize);
            for i in 0..1000 {
                let r = if i % 2 == 0 {
                    straddle += 1;
                    rk_radius * (1.0 + rng.uniform(-1e-3, 1e-3))
                } else {
                    rng.uniform(0.0, 3.0 * rk_radius)
                };
                let xi = Vec2N::polar(2, r, rng.uniform(0.0, std::f64::consts::TAU));
                let h = h_via_inverse_map(&maps, xi).map_err(|e| e.to_string())?;
                worst = worst.max((h - rk.deriv(x, xi)).norm());
            }
            ok &= worst <= 1e-6 * k;
            rows.push(format!("p={p} k={k}: {worst:.1e} ({straddle} straddling)"));
        }
    }
    within(start.elapsed(), 60.0)?;
    check(ok, rows.join(", "))
}

fn determinism(dir: &Path) -> Verdict {
    let a = dir.join("det_a");
    let b = dir.join("det_b");
    for out in [&a, &b] {
        let o = Command::new(env!("CARGO_BIN_EXE_fenchelkit"))
            .args(["solve", "--quiet", "--config", "bundled:double_phase_2d", "--out"])
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        if o.status.code() != Some(0) {
            return Err(format!("solve exited {:?}", o.status.code()));
        }
    }
    let strip = |p: &Path| -> Result<String, String> {
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        Ok(text.lines().filter(|l| !l.trim_start().starts_with("\"generated_at\"")).collect::<Vec<_>>().join("\n"))
    };
    let mut names: Vec<String> =
        std::fs::read_dir(&a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    let mut differing = Vec::new();
    for name in &names {
        let same = if name == "report.json" {
            strip(&a.join(name))? == strip(&b.join(name))?
        } else {
            std::fs::read(a.join(name)).map_err(|e| e.to_string())? == std::fs::read(b.join(name)).map_err(|e| e.to_string())?
        };
        if !same {
            differing.push(name.clone());
        }
    }
    check(differing.is_empty() && names.len() > 1, format!("{} output files compared, differing: {differing:?}", names.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    let criteria: Vec<Criterion> = vec![
        ("huber closed form vs brute force", Box::new(huber_closed_form)),
        ("extension certificate suite over the zoo", Box::new(zoo_extension_certificates)),
        ("fenchel identity and inequality", Box::new(fenchel_identity)),
        ("dual growth probes", Box::new(dual_growth_probes)),
        ("quadratic 1D unconstrained solve", Box::new(|| quadratic_unconstrained(d))),
        ("quadratic 1D obstacle solve", Box::new(|| quadratic_obstacle(d))),
        ("double phase 2D run", Box::new(|| double_phase_run(d))),
        ("difference-quotient counterexample", Box::new(quotient_counterexample)),
        ("inverse map vs argmax", Box::new(inverse_map_cross_check)),
        ("solve determinism", Box::new(|| determinism(d))),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("acceptance {id} PASS {name} [{secs:.2}s]: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("acceptance {id} FAIL {name} [{secs:.2}s]: {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
