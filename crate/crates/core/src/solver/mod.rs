//! The approximation scheme: ε_j-almost minimizers u_j of I_{k_j} over K for
//! an increasing ladder k_j, followed by the dual fields σ_j = F_{k_j}'(∇u_j)
//! and σ = F'(∇u).

mod diagnostics;

pub use diagnostics::{
    dis_var_check, dual_integrability_check, eta_battery, fenchel_identity_field, run_diagnostics, sigma_convergence_probe,
    variational_inequality_check, Diagnostics, DisVarRow, DisVarTable, DualBoundRow, DualBoundTable, EtaFunction,
    random_feasible, FenchelField, SigmaTable, ViRow, ViTable, SIGMA_THRESHOLDS,
};

use crate::discretize::{
    cell_values, energy_and_gradient, gradient, ConstraintKind, ConstraintSet, DiscretizeError, Grid, Integrand, Pointwise,
    ScalarField, VectorField,
};
use crate::energy::{Density, EnergyDensity, RadialProfile};
use crate::legendre::{conjugate_local_bound, ConjugateHandle, LegendreError, RestrictedConjugate};
use crate::vector::Vec2N;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version tag written into every serialized [`SolveReport`].
pub const REPORT_SCHEMA: &str = "fenchelkit.solve/1";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("comparison function is not admissible: {0}")]
    Comparison(String),
    #[error("hypothesis fails: the discrete integral of F(x, t∇w₀) with t = {t} is {value}")]
    Hypothesis { t: f64, value: f64 },
    #[error("coercivity violated at stage {stage}: ‖∇u‖₁ = {grad_l1:e} exceeds the a priori bound {bound:e}")]
    Coercivity { stage: usize, grad_l1: f64, bound: f64 },
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Legendre(#[from] LegendreError),
}

/// Stopping tolerances. `stat` and `outer` scale with the cell volume hⁿ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// tol_stat = stat·hⁿ for the projected-gradient stationarity measure.
    pub stat: f64,
    /// Relative tolerance for the (dis-var) margins.
    pub vi: f64,
    /// Relative tolerance for the Euler–Lagrange margins m(η).
    pub el: f64,
    /// ‖u_J − u_{J−1}‖₁ threshold for the outer loop.
    pub outer: f64,
    /// Relative tolerance for the integrated Fenchel identity.
    pub fenchel: f64,
    /// Iteration cap per stage.
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { stat: 1e-8, vi: 1e-6, el: 1e-6, outer: 1e-6, fenchel: 1e-8, max_iter: 200_000 }
    }
}

/// The ladder (k_j, ε_j).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub k_values: Vec<f64>,
    pub eps_values: Vec<f64>,
    /// Stop once k_J ≥ 2 max|F'(∇u_J)| and the last update is small, even
    /// if stages remain.
    pub stop_early: bool,
    /// Never stop before this many stages.
    pub min_stages: usize,
}

impl Schedule {
    pub fn new(k_values: Vec<f64>, eps_values: Vec<f64>) -> Result<Self, SolverError> {
        let s = Self { k_values, eps_values, stop_early: false, min_stages: 1 };
        s.validate()?;
        Ok(s)
    }

    /// k_j = k₀·growthʲ and ε_j = ε₀·growth⁻ʲ for j = 0..=max_j, stopping
    /// early once the coincidence region covers the realized gradients.
    pub fn geometric(k0: f64, growth: f64, max_j: usize, eps0: f64) -> Result<Self, SolverError> {
        if !(growth > 1.0 && growth.is_finite()) {
            return Err(SolverError::Schedule(format!("growth must exceed 1, got {growth}")));
        }
        let k_values = (0..=max_j).map(|j| k0 * growth.powi(j as i32)).collect();
        let eps_values = (0..=max_j).map(|j| eps0 * growth.powi(-(j as i32))).collect();
        let s = Self { k_values, eps_values, stop_early: true, min_stages: 3.min(max_j + 1) };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.k_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_values.is_empty()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Schedule(m));
        if self.k_values.is_empty() {
            return bad("needs at least one stage".into());
        }
        if self.k_values.len() != self.eps_values.len() {
            return bad(format!("{} k values but {} ε values", self.k_values.len(), self.eps_values.len()));
        }
        if self.k_values.iter().chain(&self.eps_values).any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("k and ε must be positive and finite".into());
        }
        if self.k_values.windows(2).any(|w| w[1] <= w[0]) {
            return bad("k must increase strictly".into());
        }
        if self.eps_values.windows(2).any(|w| w[1] >= w[0]) {
            return bad("ε must decrease strictly".into());
        }
        Ok(())
    }
}

/// Why an inner solve stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stationary,
    SmallDecrease,
    IterationCap,
}

/// Output of [`almost_minimize`].
#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub u: ScalarField,
    pub energy: f64,
    pub warm_energy: f64,
    pub iterations: usize,
    pub stationarity: f64,
    pub lipschitz: f64,
    pub stop: StopReason,
}

impl InnerResult {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::IterationCap
    }
}

/// F_k with f*(x_c, k) precomputed per cell for radial energies; falls back
/// to the generic restricted conjugate otherwise.
pub struct CellRestricted<'a> {
    rk: &'a RestrictedConjugate,
    cache: Vec<Option<(RadialProfile, f64)>>,
}

impl<'a> CellRestricted<'a> {
    pub fn new(g: &Grid, rk: &'a RestrictedConjugate) -> Self {
        let k = rk.k();
        let cache = (0..g.cell_count())
            .map(|c| {
                let x = g.cell_center(c);
                if rk.is_radial() && rk.conj().kind() == crate::legendre::ConjugateKind::Analytic {
                    rk.base().radial_profile(x).map(|p| (p, p.conjugate(k)))
                } else {
                    None
                }
            })
            .collect();
        Self { rk, cache }
    }
}

impl Integrand for CellRestricted<'_> {
    fn eval_cell(&self, cell: usize, x: Vec2N, xi: Vec2N) -> (f64, Vec2N) {
        match self.cache[cell] {
            Some((prof, fstar_k)) => {
                let r = xi.norm();
                if r == 0.0 {
                    return (0.0, Vec2N::zero(xi.dim()));
                }
                let k = self.rk.k();
                let s = prof.slope(r);
                if s <= k {
                    (prof.value(r), xi * (s / r))
                } else {
                    (k * r - fstar_k, xi * (k / r))
                }
            }
            None => self.rk.value_and_gradient(x, xi),
        }
    }
}

fn stationarity(k: &ConstraintSet, u: &ScalarField, grad: &ScalarField, tau: f64) -> f64 {
    k.project(&u.axpy(-tau, grad)).dist_inf(u) / tau
}

/// Largest eigenvalue of the energy Hessian at u, by power iteration on
/// finite differences of the gradient over interior nodes.
fn lipschitz_estimate<I: Integrand + ?Sized>(g: &Grid, f: &I, u: &ScalarField, grad: &ScalarField) -> f64 {
    let interior: Vec<usize> = g.interior_nodes().collect();
    let mut v = ScalarField::zeros(*g);
    for (n, &i) in interior.iter().enumerate() {
        // deterministic start with energy in every mode
        v.values_mut()[i] = 1.0 + 0.5 * ((n as f64) * 0.618_033_988_749_895).fract();
    }
    let mut lambda = 0.0;
    for _ in 0..30 {
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            break;
        }
        v.values_mut().iter_mut().for_each(|x| *x /= norm);
        let delta = 1e-6 * (1.0 + u.max_abs());
        let (_, g2) = energy_and_gradient(g, f, &u.axpy(delta, &v)).expect("field on grid");
        let hv = g2.axpy(-1.0, grad);
        let mut hv = ScalarField::new(*g, hv.values().iter().map(|x| x / delta).collect()).expect("finite");
        for b in g.boundary_nodes() {
            hv.values_mut()[b] = 0.0;
        }
        // Rayleigh quotient of the normalized iterate
        lambda = hv.dot(&v).abs();
        v = hv;
    }
    lambda.max(1e-12 * g.cell_volume())
}

/// An ε-almost minimizer of u ↦ Σ_c f(x_c, ∇_h u_c) hⁿ over K.
///
/// Projected gradient with Armijo backtracking (halving, constant 1e−4).
/// The first trial step of each iteration is the Barzilai–Borwein step,
/// clamped below by τ̄ = 1/L with L from power iteration. Stops when the
/// stationarity measure ‖u − P(u − τ̄ g)‖∞/τ̄ drops to `stat`·hⁿ or an
/// iteration lowers the energy by at most ε·hⁿ (when ε·hⁿ is above the
/// float resolution of the energy).
pub fn almost_minimize<I: Integrand + ?Sized>(
    g: &Grid,
    f: &I,
    k: &ConstraintSet,
    eps: f64,
    warm_start: &ScalarField,
    tol: &Tolerances,
) -> Result<InnerResult, SolverError> {
    let vol = g.cell_volume();
    let tol_stat = tol.stat * vol;
    let mut u = k.project(warm_start);
    let (mut e, mut grad) = energy_and_gradient(g, f, &u)?;
    let warm_energy = e;
    let lipschitz = lipschitz_estimate(g, f, &u, &grad);
    let tau_bar = 1.0 / lipschitz;
    let mut stat = stationarity(k, &u, &grad, tau_bar);
    let mut tau = tau_bar;
    let mut iterations = 0;
    let mut stop = StopReason::IterationCap;
    while iterations < tol.max_iter {
        if stat <= tol_stat {
            stop = StopReason::Stationary;
            break;
        }
        iterations += 1;
        let mut trial = tau.max(tau_bar);
        let (un, en, gn) = loop {
            let cand = k.project(&u.axpy(-trial, &grad));
            let d = cand.axpy(-1.0, &u);
            let (ec, gc) = energy_and_gradient(g, f, &cand)?;
            let slack = 1e-15 * (1.0 + e.abs());
            if ec <= e + 1e-4 * grad.dot(&d) + slack || trial < 1e-30 * tau_bar {
                break (cand, ec, gc);
            }
            trial *= 0.5;
        };
        let s = un.axpy(-1.0, &u);
        let y = gn.axpy(-1.0, &grad);
        let sy = s.dot(&y);
        tau = if sy > 0.0 { (s.dot(&s) / sy).min(1e6 * tau_bar) } else { tau_bar };
        let decrease = e - en;
        u = un;
        e = en;
        grad = gn;
        stat = stationarity(k, &u, &grad, tau_bar);
        if stat <= tol_stat {
            stop = StopReason::Stationary;
            break;
        }
        // below the float resolution of the energy the decrease test only
        // measures roundoff, so it is applied only where it can be resolved
        let resolvable = eps * vol > 1e-13 * (1.0 + e.abs());
        if resolvable && decrease >= 0.0 && decrease <= eps * vol {
            stop = StopReason::SmallDecrease;
            break;
        }
    }
    Ok(InnerResult { u, energy: e, warm_energy, iterations, stationarity: stat, lipschitz, stop })
}

/// The minimization problem: grid, energy, admissible set and the
/// comparison function w₀ with exponent t > 1.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: Grid,
    pub energy: EnergyDensity,
    pub constraint: ConstraintSet,
    pub w0: ScalarField,
    pub t: f64,
}

impl Problem {
    /// A problem whose comparison function is the projection of the
    /// discrete harmonic extension of the boundary data.
    pub fn with_default_comparison(grid: Grid, energy: EnergyDensity, constraint: ConstraintSet, t: f64) -> Self {
        let w0 = constraint.project(&crate::discretize::harmonic_extension(&grid, constraint.boundary_values()));
        Self { grid, energy, constraint, w0, t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NonConverged,
}

/// One stage of the scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub k: f64,
    pub eps: f64,
    /// √ε, the Ekeland radius; recorded for reference only.
    pub lambda: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub stationarity: f64,
    pub lipschitz: f64,
    /// I_k at the warm start and at u_j.
    pub warm_energy: f64,
    pub energy: f64,
    pub grad_l1: f64,
    /// max over cells of |F'(x_c, ∇_h u_j)|.
    pub max_deriv: f64,
    /// ‖u_j − u_{j−1}‖₁, absent at the first stage.
    pub update_l1: Option<f64>,
    pub u: ScalarField,
    pub sigma: VectorField,
}

/// Everything the scheme computed, plus diagnostics once they are run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: String,
    pub energy: String,
    pub grid: Grid,
    pub constraint: ConstraintKind,
    pub t: f64,
    pub tolerances: Tolerances,
    pub status: SolveStatus,
    /// Whether the last k exceeds twice the largest realized |F'|.
    pub coincidence_reached: bool,
    /// The a priori bound on ‖∇u_j‖₁ used by the coercivity check.
    pub coercivity_bound: f64,
    /// ∫F(x, t∇w₀), the hypothesis integral.
    pub hypothesis_integral: f64,
    pub stages: Vec<StageRecord>,
    pub u: ScalarField,
    pub grad_u: VectorField,
    pub sigma: VectorField,
    pub w0: ScalarField,
    /// Per cell F*(σ) + F(∇u) − σ·∇u.
    pub fenchel_residual: Vec<f64>,
    pub dual_integral: f64,
    pub primal_integral: f64,
    pub pairing_integral: f64,
    pub diagnostics: Option<Diagnostics>,
}

impl SolveReport {
    /// |dual + primal − pairing| relative to 1 + |pairing|.
    pub fn integrated_fenchel_gap(&self) -> f64 {
        (self.dual_integral + self.primal_integral - self.pairing_integral).abs() / (1.0 + self.pairing_integral.abs())
    }
}

/// σ = F'(x_c, ∇u_c) per cell together with the cell values of F.
fn dual_field<D: Density>(g: &Grid, f: &D, grad: &VectorField) -> (Vec<f64>, VectorField) {
    let vals = cell_values(g, &Pointwise(f), grad);
    let sigma = VectorField::new(*g, vals.iter().map(|(_, s)| *s).collect()).expect("finite derivative");
    (vals.into_iter().map(|(v, _)| v).collect(), sigma)
}

/// Runs every stage of the schedule and fills a [`SolveReport`] (without
/// diagnostics).
pub fn run_scheme(problem: &Problem, sched: &Schedule, tol: &Tolerances) -> Result<SolveReport, SolverError> {
    sched.validate()?;
    let g = &problem.grid;
    let f = &problem.energy;
    let kset = &problem.constraint;
    if !(problem.t > 1.0 && problem.t.is_finite()) {
        return Err(SolverError::Comparison(format!("t must exceed 1, got {}", problem.t)));
    }
    if problem.w0.grid() != *g || !kset.contains(&problem.w0, 1e-12) {
        return Err(SolverError::Comparison("w₀ must lie in K".into()));
    }
    let vol = g.cell_volume();
    let scaled = ScalarField::new(*g, problem.w0.values().iter().map(|v| v * problem.t).collect())?;
    let hyp = crate::discretize::energy(g, f, &scaled)?;
    if !hyp.is_finite() {
        return Err(SolverError::Hypothesis { t: problem.t, value: hyp });
    }
    // F_k ≥ |ξ| − M_{F*}(1) for k ≥ 1 bounds ‖∇u_j‖₁ by I(w₀) + ε + M_{F*}(1)|Ω|
    let conj = ConjugateHandle::analytic(f);
    let m1 = conjugate_local_bound(&conj, 1.0, 64).to_f64();
    let i_w0 = crate::discretize::energy(g, f, &problem.w0)?;
    let coercivity_bound = (i_w0 + sched.eps_values[0] + m1) * (1.0 + 1e-6) + 1e-9;

    let mut stages: Vec<StageRecord> = Vec::new();
    let mut warm = problem.w0.clone();
    let mut status = SolveStatus::Converged;
    for (j, (&k, &eps)) in sched.k_values.iter().zip(&sched.eps_values).enumerate() {
        let rk = RestrictedConjugate::analytic(f, k)?;
        let cached = CellRestricted::new(g, &rk);
        let inner = almost_minimize(g, &cached, kset, eps, &warm, tol)?;
        if !inner.converged() {
            status = SolveStatus::NonConverged;
        }
        let grad = gradient(g, &inner.u)?;
        let cells = cell_values(g, &cached, &grad);
        let sigma = VectorField::new(*g, cells.iter().map(|(_, s)| *s).collect())?;
        let grad_l1 = grad.l1_norm();
        if k >= 1.0 && grad_l1 > coercivity_bound {
            return Err(SolverError::Coercivity { stage: j, grad_l1, bound: coercivity_bound });
        }
        let max_deriv = (0..g.cell_count()).map(|c| f.deriv(g.cell_center(c), grad.values()[c]).norm()).fold(0.0, f64::max);
        let update_l1 = stages.last().map(|s| inner.u.dist_l1(&s.u));
        stages.push(StageRecord {
            k,
            eps,
            lambda: eps.sqrt(),
            iterations: inner.iterations,
            stop: inner.stop,
            stationarity: inner.stationarity,
            lipschitz: inner.lipschitz,
            warm_energy: inner.warm_energy,
            energy: inner.energy,
            grad_l1,
            max_deriv,
            update_l1,
            u: inner.u.clone(),
            sigma,
        });
        warm = inner.u;
        let settled = update_l1.is_some_and(|d| d <= tol.outer);
        if sched.stop_early && stages.len() >= sched.min_stages && k >= 2.0 * max_deriv && settled {
            break;
        }
    }

    let last = stages.last().expect("at least one stage");
    let u = last.u.clone();
    let grad_u = gradient(g, &u)?;
    let (primal_cells, sigma) = dual_field(g, f, &grad_u);
    let dual_cells: Vec<f64> =
        (0..g.cell_count()).map(|c| conj.eval(g.cell_center(c), sigma.values()[c]).to_f64()).collect();
    let fenchel_residual: Vec<f64> = (0..g.cell_count())
        .map(|c| dual_cells[c] + primal_cells[c] - sigma.values()[c].dot(&grad_u.values()[c]))
        .collect();
    let dual_integral = dual_cells.iter().sum::<f64>() * vol;
    let primal_integral = primal_cells.iter().sum::<f64>() * vol;
    let pairing_integral = sigma.pairing(&grad_u);
    Ok(SolveReport {
        schema_version: REPORT_SCHEMA.to_string(),
        energy: f.name().to_string(),
        grid: *g,
        constraint: kset.kind(),
        t: problem.t,
        tolerances: *tol,
        status,
        coincidence_reached: last.k >= 2.0 * last.max_deriv,
        coercivity_bound,
        hypothesis_integral: hyp,
        stages,
        u,
        grad_u,
        sigma,
        w0: problem.w0.clone(),
        fenchel_residual,
        dual_integral,
        primal_integral,
        pairing_integral,
        diagnostics: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_problem(n: usize, cells: usize) -> Problem {
        let g = Grid::new(n, cells).unwrap();
        let f = EnergyDensity::power(n, 2.0).unwrap();
        let k = ConstraintSet::unconstrained(g.sample(|x| x.x1()));
        Problem::with_default_comparison(g, f, k, 2.0)
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(vec![1.0, 2.0], vec![1e-3]).is_err());
        assert!(Schedule::new(vec![2.0, 1.0], vec![1e-3, 1e-4]).is_err());
        assert!(Schedule::new(vec![1.0, 2.0], vec![1e-3, 1e-3]).is_err());
        let s = Schedule::geometric(1.0, 2.0, 4, 1e-6).unwrap();
        assert_eq!(s.k_values, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
        assert!((s.eps_values[4] - 1e-6 / 16.0).abs() < 1e-20);
    }

    #[test]
    fn optimal_warm_start_returns_immediately() {
        let p = quad_problem(1, 16);
        let rk = RestrictedConjugate::analytic(&p.energy, 4.0).unwrap();
        let r = almost_minimize(&p.grid, &CellRestricted::new(&p.grid, &rk), &p.constraint, 1e-10, &p.w0, &Tolerances::default())
            .unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.stop, StopReason::Stationary);
    }

    #[test]
    fn quadratic_reaches_affine_minimizer() {
        let p = quad_problem(1, 16);
        let start = p.constraint.project(&ScalarField::zeros(p.grid));
        let rk = RestrictedConjugate::analytic(&p.energy, 2.0).unwrap();
        let r = almost_minimize(&p.grid, &CellRestricted::new(&p.grid, &rk), &p.constraint, 1e-14, &start, &Tolerances::default())
            .unwrap();
        assert!(r.converged());
        assert!(r.u.dist_inf(&p.w0) < 1e-8, "{}", r.u.dist_inf(&p.w0));
        assert!((r.energy - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_boundary_gives_zero() {
        let g = Grid::new(2, 8).unwrap();
        let a = crate::coefficient::CoefficientField::expression(
            "a",
            crate::expr::Expr::parse("x1").unwrap(),
            2,
            0.0,
            1.0,
        )
        .unwrap();
        let f = EnergyDensity::double_phase(2, 2.0, 3.0, a).unwrap();
        let p = Problem::with_default_comparison(g, f, ConstraintSet::unconstrained(ScalarField::zeros(g)), 2.0);
        let rep = run_scheme(&p, &Schedule::geometric(1.0, 2.0, 3, 1e-10).unwrap(), &Tolerances::default()).unwrap();
        assert_eq!(rep.u.max_abs(), 0.0);
        assert_eq!((rep.dual_integral, rep.primal_integral, rep.pairing_integral), (0.0, 0.0, 0.0));
    }
}
