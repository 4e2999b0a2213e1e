//! A-posteriori checks on a finished run: the (dis-var) margins, the dual
//! integrability bound, Euler–Lagrange margins over a battery of test
//! directions, the Fenchel residual field, and σ_j → σ proxies.

use super::{Problem, SolveReport};
use crate::discretize::{admissible_direction_check, gradient, ConstraintKind, ConstraintSet, DiscretizeError, Grid, ScalarField};
use crate::energy::EnergyDensity;
use crate::legendre::ConjugateHandle;
use crate::sampling::SplitMix64;
use crate::vector::Vec2N;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisVarRow {
    pub stage: usize,
    pub w: String,
    /// ∫σ_j·∇(w − u_j).
    pub pairing: f64,
    /// ‖∇w‖₁ + max_{i≤j} ‖∇u_i‖₁.
    pub c: f64,
    pub eps: f64,
    /// pairing + c·ε_j.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisVarTable {
    pub tol: f64,
    pub rows: Vec<DisVarRow>,
    pub passed: bool,
}

/// Margins of ∫σ_j·∇(w − u_j) + c ε_j ≥ 0 for every stage and every w.
/// A margin passes when it is at least −tol·(1 + |∫σ_j·∇w| + |∫σ_j·∇u_j|).
pub fn dis_var_check(report: &SolveReport, ws: &[(String, ScalarField)]) -> Result<DisVarTable, DiscretizeError> {
    let g = report.grid;
    let tol = report.tolerances.vi;
    let mut rows = Vec::new();
    let mut running = 0.0f64;
    for (j, st) in report.stages.iter().enumerate() {
        running = running.max(st.grad_l1);
        let grad_u = gradient(&g, &st.u)?;
        let su = st.sigma.pairing(&grad_u);
        for (name, w) in ws {
            let grad_w = gradient(&g, w)?;
            let sw = st.sigma.pairing(&grad_w);
            let c = grad_w.l1_norm() + running;
            let margin = (sw - su) + c * st.eps;
            let passed = margin >= -tol * (1.0 + sw.abs() + su.abs());
            rows.push(DisVarRow { stage: j, w: name.clone(), pairing: sw - su, c, eps: st.eps, margin, passed });
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(DisVarTable { tol, rows, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualBoundRow {
    pub stage: usize,
    /// ∫F*(x, σ_j).
    pub lhs: f64,
    /// ∫F(x, t∇w₀)/(t − 1) + c t ε_j/(t − 1).
    pub rhs: f64,
    /// Cells where F*(x_c, σ_j) = +∞.
    pub infinite_cells: Vec<usize>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualBoundTable {
    pub t: f64,
    pub rows: Vec<DualBoundRow>,
    /// ∫F*(x, σ) for the final σ.
    pub limit: f64,
    /// The smallest stage value among stages whose k covers twice the
    /// realized |F'| (the last stage if none does).
    pub liminf: f64,
    pub limit_ok: bool,
    pub passed: bool,
}

fn dual_integral(g: &Grid, conj: &ConjugateHandle, sigma: &[Vec2N]) -> (f64, Vec<usize>) {
    let mut sum = 0.0;
    let mut inf = Vec::new();
    for (c, s) in sigma.iter().enumerate() {
        match conj.eval(g.cell_center(c), *s).finite() {
            Some(v) => sum += v,
            None => inf.push(c),
        }
    }
    (sum * g.cell_volume(), inf)
}

/// The stagewise bound ∫F*(σ_j) ≤ ∫F(t∇w₀)/(t−1) + c t ε_j/(t−1) and the
/// lower semicontinuity of the limit.
pub fn dual_integrability_check(
    report: &SolveReport,
    f: &EnergyDensity,
    t: f64,
    w0: &ScalarField,
) -> Result<DualBoundTable, DiscretizeError> {
    let g = report.grid;
    let tol = report.tolerances.vi;
    let conj = ConjugateHandle::analytic(f);
    let scaled = ScalarField::new(g, w0.values().iter().map(|v| v * t).collect())?;
    let hyp = crate::discretize::energy(&g, f, &scaled)?;
    let w0_l1 = gradient(&g, w0)?.l1_norm();
    let mut running = 0.0f64;
    let mut rows = Vec::new();
    for (j, st) in report.stages.iter().enumerate() {
        running = running.max(st.grad_l1);
        let c = w0_l1 + running;
        let (lhs, infinite_cells) = dual_integral(&g, &conj, st.sigma.values());
        let rhs = hyp / (t - 1.0) + c * t * st.eps / (t - 1.0);
        let passed = infinite_cells.is_empty() && lhs <= rhs * (1.0 + tol) + tol * g.cell_volume();
        rows.push(DualBoundRow { stage: j, lhs, rhs, infinite_cells, passed });
    }
    let (limit, inf_final) = dual_integral(&g, &conj, report.sigma.values());
    let covered: Vec<f64> = report
        .stages
        .iter()
        .zip(&rows)
        .filter(|(st, _)| st.k >= 2.0 * st.max_deriv)
        .map(|(_, r)| r.lhs)
        .collect();
    let liminf = if covered.is_empty() { rows.last().map_or(0.0, |r| r.lhs) } else { covered.iter().cloned().fold(f64::INFINITY, f64::min) };
    let limit_ok = inf_final.is_empty() && limit <= liminf + tol * (1.0 + liminf.abs());
    let passed = limit_ok && rows.iter().all(|r| r.passed);
    Ok(DualBoundTable { t, rows, limit, liminf, limit_ok, passed })
}

/// A test direction: a nonnegative tensor-product bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaFunction {
    pub name: String,
    pub center: Vec2N,
    pub width: f64,
    pub eta: ScalarField,
}

/// 9 centers × 2 widths of bumps Π_i b((x_i − c_i)/w) with
/// b(s) = (1 − s²)² on |s| < 1, set to zero on the boundary. Centers are
/// 0.1, 0.2, …, 0.9 in 1D and {0.25, 0.5, 0.75}² in 2D.
pub fn eta_battery(g: &Grid) -> Vec<EtaFunction> {
    let centers: Vec<Vec2N> = if g.dim() == 1 {
        (1..=9).map(|i| Vec2N::new1(0.1 * i as f64)).collect()
    } else {
        let t = [0.25, 0.5, 0.75];
        t.iter().flat_map(|&b| t.iter().map(move |&a| Vec2N::new2(a, b))).collect()
    };
    let bump = |s: f64| if s.abs() < 1.0 { (1.0 - s * s).powi(2) } else { 0.0 };
    let mut out = Vec::new();
    for width in [0.1, 0.25] {
        for (i, c) in centers.iter().enumerate() {
            let mut eta = g.sample(|x| (0..g.dim()).map(|a| bump((x.get(a) - c.get(a)) / width)).product());
            for b in g.boundary_nodes() {
                eta.values_mut()[b] = 0.0;
            }
            out.push(EtaFunction { name: format!("bump{i}_w{width}"), center: *c, width, eta });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViRow {
    pub name: String,
    /// m(η) = Σ_c σ_c·(∇_h η)_c hⁿ.
    pub m: f64,
    /// ‖∇_h η‖₁.
    pub grad_l1: f64,
    /// Whether the support of η avoids the contact set.
    pub off_contact: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViTable {
    pub kind: ConstraintKind,
    pub tol: f64,
    pub contact_nodes: Vec<usize>,
    pub rows: Vec<ViRow>,
    pub passed: bool,
}

/// m(η) for the final σ. Unconstrained: |m| ≤ tol‖∇η‖₁. Obstacle:
/// m ≥ −tol‖∇η‖₁, and |m| ≤ tol‖∇η‖₁ for η supported off the contact set.
pub fn variational_inequality_check(
    report: &SolveReport,
    k: &ConstraintSet,
    battery: &[EtaFunction],
) -> Result<ViTable, DiscretizeError> {
    let g = report.grid;
    let tol = report.tolerances.el;
    let contact_nodes = k.contact_nodes(&report.u, 1e-9);
    let mut rows = Vec::new();
    for e in battery {
        if !admissible_direction_check(k, &e.eta)? {
            return Err(DiscretizeError::Io(format!("test direction {} is not admissible for K", e.name)));
        }
        let grad = gradient(&g, &e.eta)?;
        let m = report.sigma.pairing(&grad);
        let grad_l1 = grad.l1_norm();
        let off_contact = contact_nodes.iter().all(|&v| e.eta.values()[v] == 0.0);
        let bound = tol * grad_l1;
        let passed = match k.kind() {
            ConstraintKind::Unconstrained => m.abs() <= bound,
            ConstraintKind::Obstacle => m >= -bound && (!off_contact || m.abs() <= bound),
        };
        rows.push(ViRow { name: e.name.clone(), m, grad_l1, off_contact, passed });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(ViTable { kind: k.kind(), tol, contact_nodes, rows, passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FenchelField {
    pub max_abs: f64,
    pub l1: f64,
    /// |∫F*(σ) + ∫F(∇u) − ∫σ·∇u| / (1 + |∫σ·∇u|).
    pub integrated_gap: f64,
    /// t used in F(ξ) ≤ ξ·F'(ξ) ≤ (F(tξ) − F(ξ))/(t − 1) ≤ F(tξ)/(t − 1).
    pub chain_t: f64,
    pub chain_violations: Vec<usize>,
    /// Smallest slack in the chain over all cells.
    pub chain_worst: f64,
    pub passed: bool,
}

/// Summarizes the per-cell Fenchel residual and checks the chain
/// F(ξ) ≤ ξ·F'(ξ) ≤ (F(tξ) − F(ξ))/(t − 1) ≤ F(tξ)/(t − 1) at ξ = ∇u_c.
pub fn fenchel_identity_field(report: &SolveReport, f: &EnergyDensity) -> FenchelField {
    let g = report.grid;
    let t = report.t;
    let tol = report.tolerances.fenchel;
    let res = &report.fenchel_residual;
    let max_abs = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let l1 = res.iter().map(|r| r.abs()).sum::<f64>() * g.cell_volume();
    let mut chain_violations = Vec::new();
    let mut chain_worst = f64::INFINITY;
    let mut cells_ok = true;
    for (c, &r) in res.iter().enumerate() {
        let x = g.cell_center(c);
        let xi = report.grad_u.values()[c];
        let fx = f.eval(x, xi);
        let ftx = f.eval(x, xi * t);
        let pair = xi.dot(&f.deriv(x, xi));
        let chain = [fx, pair, (ftx - fx) / (t - 1.0), ftx / (t - 1.0)];
        let slack = chain.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let scale = 1.0 + ftx.abs();
        chain_worst = chain_worst.min(slack / scale);
        if slack < -1e-12 * scale {
            chain_violations.push(c);
        }
        let sigma = report.sigma.values()[c];
        if r.abs() > tol * (1.0 + sigma.dot(&xi).abs()) {
            cells_ok = false;
        }
    }
    let integrated_gap = report.integrated_fenchel_gap();
    let passed = cells_ok && chain_violations.is_empty() && integrated_gap <= tol;
    FenchelField { max_abs, l1, integrated_gap, chain_t: t, chain_violations, chain_worst, passed }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaTable {
    pub thresholds: Vec<f64>,
    /// fractions[j][e]: volume fraction of cells with |σ_j − σ| > thresholds[e].
    pub fractions: Vec<Vec<f64>>,
    /// ‖σ_j − σ‖₁.
    pub l1: Vec<f64>,
    /// Number of trailing stages over which monotonicity is required.
    pub tail: usize,
    pub nonincreasing_tail: bool,
}

/// Exceedance fractions and L¹ distances of σ_j from σ.
pub fn sigma_convergence_probe(report: &SolveReport, thresholds: &[f64]) -> SigmaTable {
    let g = report.grid;
    let cells = g.cell_count() as f64;
    let mut fractions: Vec<Vec<f64>> = Vec::new();
    let mut l1 = Vec::new();
    for st in &report.stages {
        let d: Vec<f64> = st.sigma.values().iter().zip(report.sigma.values()).map(|(a, b)| (*a - *b).norm()).collect();
        fractions.push(thresholds.iter().map(|&e| d.iter().filter(|&&x| x > e).count() as f64 / cells).collect());
        l1.push(d.iter().sum::<f64>() * g.cell_volume());
    }
    let tail = 3.min(fractions.len());
    let start = fractions.len() - tail;
    let nonincreasing_tail =
        (start + 1..fractions.len()).all(|j| (0..thresholds.len()).all(|e| fractions[j][e] <= fractions[j - 1][e]));
    SigmaTable { thresholds: thresholds.to_vec(), fractions, l1, tail, nonincreasing_tail }
}

/// All diagnostic tables for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub dis_var: DisVarTable,
    pub dual: DualBoundTable,
    pub vi: ViTable,
    pub fenchel: FenchelField,
    pub sigma: SigmaTable,
    pub passed: bool,
}

pub const SIGMA_THRESHOLDS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// A feasible field: w₀ plus a seeded interior perturbation, projected on K.
pub fn random_feasible(problem: &Problem, seed: u64) -> ScalarField {
    let g = problem.grid;
    let mut rng = SplitMix64::new(seed);
    let mut v = problem.w0.clone();
    for node in g.interior_nodes() {
        v.values_mut()[node] += rng.uniform(-0.5, 0.5);
    }
    problem.constraint.project(&v)
}

/// Runs every check with w ∈ {w₀, u, a random feasible field} and the
/// default η battery.
pub fn run_diagnostics(problem: &Problem, report: &SolveReport, seed: u64) -> Result<Diagnostics, DiscretizeError> {
    let ws = vec![
        ("w0".to_string(), problem.w0.clone()),
        ("u".to_string(), report.u.clone()),
        ("random".to_string(), random_feasible(problem, seed)),
    ];
    let dis_var = dis_var_check(report, &ws)?;
    let dual = dual_integrability_check(report, &problem.energy, problem.t, &problem.w0)?;
    let vi = variational_inequality_check(report, &problem.constraint, &eta_battery(&problem.grid))?;
    let fenchel = fenchel_identity_field(report, &problem.energy);
    let sigma = sigma_convergence_probe(report, &SIGMA_THRESHOLDS);
    let passed = dis_var.passed && dual.passed && vi.passed && fenchel.passed && sigma.nonincreasing_tail;
    Ok(Diagnostics { dis_var, dual, vi, fenchel, sigma, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inequality_chain_arithmetic_for_quadratic() {
        let f = EnergyDensity::power(1, 2.0).unwrap();
        let x = Vec2N::new1(0.5);
        let xi = Vec2N::new1(1.0);
        let t = 2.0;
        let fx = f.eval(x, xi);
        let ftx = f.eval(x, xi * t);
        let chain = [fx, xi.dot(&f.deriv(x, xi)), (ftx - fx) / (t - 1.0), ftx / (t - 1.0)];
        assert_eq!(chain, [0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn battery_has_eighteen_nonnegative_bumps() {
        for n in [1, 2] {
            let g = Grid::new(n, 16).unwrap();
            let b = eta_battery(&g);
            assert_eq!(b.len(), 18);
            for e in &b {
                assert!(e.eta.values().iter().all(|&v| v >= 0.0));
                assert!(e.eta.max_abs() > 0.0);
                assert!(g.boundary_nodes().all(|v| e.eta.values()[v] == 0.0));
            }
        }
    }
}
