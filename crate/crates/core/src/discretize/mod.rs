//! Uniform grids on [0, 1]ⁿ, the forward-difference gradient, midpoint
//! energies and their exact gradients, and the constraint sets K.
//!
//! Nodes are numbered with x₁ fastest: node (i, j) has index
//! i + (N + 1)·j. Cell (i, j) spans [i h, (i+1) h] × [j h, (j+1) h] and has
//! index i + N·j. In 1D the j index is absent.

mod io;

pub use io::{read_binary, read_csv, write_binary, write_csv, FieldData, FieldKind, BINARY_MAGIC};

use crate::energy::Density;
use crate::vector::Vec2N;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("grid needs dimension 1 or 2 and at least 4 cells per axis, got n = {n}, N = {cells}")]
    Grid { n: usize, cells: usize },
    #[error("{what}: expected {expected} values, got {got}")]
    Shape { what: String, expected: usize, got: usize },
    #[error("{what}: value at index {index} is not finite")]
    NonFinite { what: String, index: usize },
    #[error("obstacle exceeds boundary data at node {node}: ψ = {psi} > u₀ = {u0}")]
    Infeasible { node: usize, psi: f64, u0: f64 },
    #[error("direction is nonzero ({value}) at boundary node {node}")]
    BoundaryDirection { node: usize, value: f64 },
    #[error("field file: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    cells: usize,
}

impl Grid {
    pub fn new(n: usize, cells: usize) -> Result<Self, DiscretizeError> {
        if !(n == 1 || n == 2) || cells < 4 {
            return Err(DiscretizeError::Grid { n, cells });
        }
        Ok(Self { n, cells })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Cells per axis, N.
    pub fn cells_per_axis(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// hⁿ, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n as i32)
    }

    pub fn node_count(&self) -> usize {
        (self.cells + 1).pow(self.n as u32)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.pow(self.n as u32)
    }

    /// Per-axis node indices of a node.
    pub fn node_coords(&self, node: usize) -> [usize; 2] {
        let m = self.cells + 1;
        if self.n == 1 {
            [node, 0]
        } else {
            [node % m, node / m]
        }
    }

    pub fn node_index(&self, ij: [usize; 2]) -> usize {
        ij[0] + (self.cells + 1) * if self.n == 1 { 0 } else { ij[1] }
    }

    pub fn node_point(&self, node: usize) -> Vec2N {
        let [i, j] = self.node_coords(node);
        let h = self.h();
        if self.n == 1 {
            Vec2N::new1(i as f64 * h)
        } else {
            Vec2N::new2(i as f64 * h, j as f64 * h)
        }
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 2] {
        if self.n == 1 {
            [cell, 0]
        } else {
            [cell % self.cells, cell / self.cells]
        }
    }

    pub fn cell_center(&self, cell: usize) -> Vec2N {
        let [i, j] = self.cell_coords(cell);
        let h = self.h();
        if self.n == 1 {
            Vec2N::new1((i as f64 + 0.5) * h)
        } else {
            Vec2N::new2((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
        }
    }

    /// The low corner node of a cell and its neighbors along each axis.
    fn cell_stencil(&self, cell: usize) -> (usize, [usize; 2]) {
        let [i, j] = self.cell_coords(cell);
        let base = self.node_index([i, j]);
        (base, [base + 1, base + self.cells + 1])
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let [i, j] = self.node_coords(node);
        let edge = |t: usize| t == 0 || t == self.cells;
        edge(i) || (self.n == 2 && edge(j))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&v| self.is_boundary(v))
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(move |&v| !self.is_boundary(v))
    }

    /// Samples a function at the nodes.
    pub fn sample(&self, f: impl Fn(Vec2N) -> f64) -> ScalarField {
        ScalarField { grid: *self, values: (0..self.node_count()).map(|v| f(self.node_point(v))).collect() }
    }
}

/// Node values of a function on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, DiscretizeError> {
        check_len("scalar field", grid.node_count(), values.len())?;
        check_finite("scalar field", &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max |self − other| over nodes.
    pub fn dist_inf(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Σ |self − other| hⁿ over nodes.
    pub fn dist_l1(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.grid.cell_volume()
    }

    /// self + t·other.
    pub fn axpy(&self, t: f64, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + t * b).collect();
        Self { grid: self.grid, values }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// One vector per cell, such as ∇_h u or σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    grid: Grid,
    values: Vec<Vec2N>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<Vec2N>) -> Result<Self, DiscretizeError> {
        check_len("vector field", grid.cell_count(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite() || v.dim() != grid.dim()) {
            return Err(DiscretizeError::NonFinite { what: "vector field".into(), index: i });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[Vec2N] {
        &self.values
    }

    /// Σ |v_c| hⁿ.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Σ a_c·b_c hⁿ.
    pub fn pairing(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.dot(b)).sum::<f64>() * self.grid.cell_volume()
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), DiscretizeError> {
    if expected == got {
        Ok(())
    } else {
        Err(DiscretizeError::Shape { what: what.into(), expected, got })
    }
}

fn check_finite(what: &str, values: &[f64]) -> Result<(), DiscretizeError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(DiscretizeError::NonFinite { what: what.into(), index }),
        None => Ok(()),
    }
}

fn check_grid(g: &Grid, u: &ScalarField) -> Result<(), DiscretizeError> {
    check_len("scalar field on grid", g.node_count(), u.values.len())?;
    if u.grid != *g {
        return Err(DiscretizeError::Shape {
            what: format!("field built for n = {}, N = {}", u.grid.n, u.grid.cells),
            expected: g.node_count(),
            got: u.values.len(),
        });
    }
    Ok(())
}

/// ∇_h u: forward differences from each cell's low corner.
pub fn gradient(g: &Grid, u: &ScalarField) -> Result<VectorField, DiscretizeError> {
    check_grid(g, u)?;
    let inv_h = 1.0 / g.h();
    let values = (0..g.cell_count())
        .map(|c| {
            let (base, next) = g.cell_stencil(c);
            let d = |axis: usize| (u.values[next[axis]] - u.values[base]) * inv_h;
            if g.n == 1 {
                Vec2N::new1(d(0))
            } else {
                Vec2N::new2(d(0), d(1))
            }
        })
        .collect();
    Ok(VectorField { grid: *g, values })
}

/// An integrand evaluated cell by cell. Every [`Density`] is one; solvers
/// can supply versions that cache per-cell data.
pub trait Integrand: Sync {
    fn eval_cell(&self, cell: usize, x: Vec2N, xi: Vec2N) -> (f64, Vec2N);
}

/// Adapts a [`Density`] to [`Integrand`].
pub struct Pointwise<D>(pub D);

impl<D: Density> Integrand for Pointwise<D> {
    fn eval_cell(&self, _cell: usize, x: Vec2N, xi: Vec2N) -> (f64, Vec2N) {
        self.0.value_and_gradient(x, xi)
    }
}

/// Per-cell (F(x_c, ∇_h u_c), F'(x_c, ∇_h u_c)), computed in parallel and
/// returned in cell order.
pub fn cell_values<I: Integrand + ?Sized>(g: &Grid, f: &I, grad: &VectorField) -> Vec<(f64, Vec2N)> {
    (0..g.cell_count())
        .into_par_iter()
        .map(|c| f.eval_cell(c, g.cell_center(c), grad.values[c]))
        .collect()
}

/// I(u) = Σ_c F(x_c, (∇_h u)_c) hⁿ, summed in cell order.
pub fn energy<D: Density>(g: &Grid, f: &D, u: &ScalarField) -> Result<f64, DiscretizeError> {
    let grad = gradient(g, u)?;
    let vals: Vec<f64> = (0..g.cell_count()).into_par_iter().map(|c| f.value(g.cell_center(c), grad.values[c])).collect();
    Ok(vals.iter().sum::<f64>() * g.cell_volume())
}

/// The exact gradient of [`energy`] in the node values, with boundary rows
/// set to zero.
pub fn energy_gradient<D: Density>(g: &Grid, f: &D, u: &ScalarField) -> Result<ScalarField, DiscretizeError> {
    Ok(energy_and_gradient(g, &Pointwise(f), u)?.1)
}

/// Energy and its gradient from a single pass over the cells.
pub fn energy_and_gradient<I: Integrand + ?Sized>(
    g: &Grid,
    f: &I,
    u: &ScalarField,
) -> Result<(f64, ScalarField), DiscretizeError> {
    let grad = gradient(g, u)?;
    let cells = cell_values(g, f, &grad);
    let vol = g.cell_volume();
    let energy = cells.iter().map(|(v, _)| v).sum::<f64>() * vol;
    Ok((energy, assemble_divergence(g, cells.iter().map(|(_, s)| *s))))
}

/// The adjoint of ∇_h applied to a cell field, scaled by hⁿ: node values of
/// Σ_c σ_c·∂(∇_h u)_c/∂u_v hⁿ, boundary rows zeroed.
pub fn assemble_divergence(g: &Grid, sigma: impl Iterator<Item = Vec2N>) -> ScalarField {
    let scale = g.cell_volume() / g.h();
    let mut out = vec![0.0; g.node_count()];
    for (c, s) in sigma.enumerate() {
        let (base, next) = g.cell_stencil(c);
        for axis in 0..g.n {
            let w = s.get(axis) * scale;
            out[next[axis]] += w;
            out[base] -= w;
        }
    }
    for v in g.boundary_nodes() {
        out[v] = 0.0;
    }
    ScalarField { grid: *g, values: out }
}

/// Which constraint the admissible set carries beyond the boundary data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Unconstrained,
    Obstacle,
}

/// K: node fields equal to u₀ on the boundary and, for obstacles, at least
/// ψ at every interior node where ψ is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    grid: Grid,
    boundary: ScalarField,
    obstacle: Option<Vec<Option<f64>>>,
}

impl ConstraintSet {
    /// Dirichlet data only. Interior values of `u0` are ignored.
    pub fn unconstrained(u0: ScalarField) -> Self {
        Self { grid: u0.grid, boundary: u0, obstacle: None }
    }

    /// Dirichlet data plus an obstacle; `None` entries leave a node free.
    pub fn obstacle(u0: ScalarField, psi: Vec<Option<f64>>) -> Result<Self, DiscretizeError> {
        let g = u0.grid;
        check_len("obstacle", g.node_count(), psi.len())?;
        for (node, p) in psi.iter().enumerate() {
            if let Some(p) = *p {
                if !p.is_finite() {
                    return Err(DiscretizeError::NonFinite { what: "obstacle".into(), index: node });
                }
                if g.is_boundary(node) && p > u0.values[node] {
                    return Err(DiscretizeError::Infeasible { node, psi: p, u0: u0.values[node] });
                }
            }
        }
        Ok(Self { grid: g, boundary: u0, obstacle: Some(psi) })
    }

    pub fn kind(&self) -> ConstraintKind {
        if self.obstacle.is_some() {
            ConstraintKind::Obstacle
        } else {
            ConstraintKind::Unconstrained
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn boundary_values(&self) -> &ScalarField {
        &self.boundary
    }

    pub fn obstacle_values(&self) -> Option<&[Option<f64>]> {
        self.obstacle.as_deref()
    }

    /// Lower bound at a node: u₀ on the boundary, ψ or −∞ inside.
    fn lower(&self, node: usize) -> Option<f64> {
        self.obstacle.as_ref().and_then(|p| p[node])
    }

    /// Boundary nodes set to u₀; interior nodes raised to ψ for obstacles.
    pub fn project(&self, v: &ScalarField) -> ScalarField {
        let g = &self.grid;
        let values = v
            .values
            .iter()
            .enumerate()
            .map(|(node, &x)| {
                if g.is_boundary(node) {
                    self.boundary.values[node]
                } else {
                    match self.lower(node) {
                        Some(p) => x.max(p),
                        None => x,
                    }
                }
            })
            .collect();
        ScalarField { grid: *g, values }
    }

    pub fn contains(&self, v: &ScalarField, tol: f64) -> bool {
        let g = &self.grid;
        v.values.iter().enumerate().all(|(node, &x)| {
            if g.is_boundary(node) {
                (x - self.boundary.values[node]).abs() <= tol
            } else {
                !self.lower(node).is_some_and(|p| x < p - tol)
            }
        })
    }

    /// Interior nodes where an obstacle bound is active within `tol`.
    pub fn contact_nodes(&self, v: &ScalarField, tol: f64) -> Vec<usize> {
        self.grid.interior_nodes().filter(|&node| self.lower(node).is_some_and(|p| v.values[node] <= p + tol)).collect()
    }
}

/// Whether η + K ⊂ K: always for the unconstrained kind, and iff η ≥ 0 at
/// every interior node carrying an obstacle bound otherwise.
pub fn admissible_direction_check(k: &ConstraintSet, eta: &ScalarField) -> Result<bool, DiscretizeError> {
    check_grid(&k.grid, eta)?;
    if let Some(node) = k.grid.boundary_nodes().find(|&v| eta.values[v] != 0.0) {
        return Err(DiscretizeError::BoundaryDirection { node, value: eta.values[node] });
    }
    Ok(match &k.obstacle {
        None => true,
        Some(psi) => k.grid.interior_nodes().all(|v| psi[v].is_none() || eta.values[v] >= 0.0),
    })
}

/// Applies the Dirichlet Laplacian form: the energy gradient of ½|∇_h u|²
/// with boundary rows zeroed.
pub fn dirichlet_apply(g: &Grid, u: &ScalarField) -> ScalarField {
    let grad = gradient(g, u).expect("field on this grid");
    assemble_divergence(g, grad.values.into_iter())
}

/// The discrete harmonic extension of the boundary values of `u0`, by
/// conjugate gradients on the interior nodes.
pub fn harmonic_extension(g: &Grid, u0: &ScalarField) -> ScalarField {
    let mut u = ScalarField::zeros(*g);
    for v in g.boundary_nodes() {
        u.values[v] = u0.values[v];
    }
    // residual r = −A u on the interior
    let mut r = dirichlet_apply(g, &u);
    r.values.iter_mut().for_each(|x| *x = -*x);
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let stop = 1e-28 * rr.max(1e-300) + 1e-300;
    for _ in 0..(10 * g.node_count()) {
        if rr <= stop {
            break;
        }
        let ap = dirichlet_apply(g, &p);
        let alpha = rr / p.dot(&ap);
        u = u.axpy(alpha, &p);
        r = r.axpy(-alpha, &ap);
        let next = r.dot(&r);
        p = r.axpy(next / rr, &p);
        rr = next;
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyDensity;
    use crate::legendre::RestrictedConjugate;
    use crate::sampling::SplitMix64;

    fn random_field(g: &Grid, seed: u64) -> ScalarField {
        let mut rng = SplitMix64::new(seed);
        ScalarField::new(*g, (0..g.node_count()).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn grid_rejects_small_or_3d() {
        assert!(Grid::new(1, 3).is_err());
        assert!(Grid::new(3, 8).is_err());
        let g = Grid::new(2, 4).unwrap();
        assert_eq!((g.node_count(), g.cell_count()), (25, 16));
    }

    #[test]
    fn gradient_examples() {
        let g = Grid::new(1, 4).unwrap();
        let u = ScalarField::new(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!(gradient(&g, &u).unwrap().values().iter().all(|v| (v.x1() - 1.0).abs() < 1e-15));
        let g2 = Grid::new(2, 8).unwrap();
        let affine = g2.sample(|x| 0.3 + 2.0 * x.x1() - 0.5 * x.x2());
        for v in gradient(&g2, &affine).unwrap().values() {
            assert!((*v - Vec2N::new2(2.0, -0.5)).norm() < 1e-13);
        }
    }

    #[test]
    fn quadratic_energy_of_identity_is_half() {
        let g = Grid::new(1, 16).unwrap();
        let f = EnergyDensity::power(1, 2.0).unwrap();
        let u = g.sample(|x| x.x1());
        assert!((energy(&g, &f, &u).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(energy(&g, &f, &g.sample(|_| 3.0)).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_gradient_is_graph_laplacian() {
        let g = Grid::new(1, 8).unwrap();
        let f = EnergyDensity::power(1, 2.0).unwrap();
        let u = random_field(&g, 3);
        let gr = energy_gradient(&g, &f, &u).unwrap();
        let h = g.h();
        for v in 1..8 {
            let lap = (2.0 * u.values()[v] - u.values()[v - 1] - u.values()[v + 1]) / h;
            assert!((gr.values()[v] - lap).abs() < 1e-12);
        }
        assert_eq!(gr.values()[0], 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = Grid::new(2, 6).unwrap();
        let f = EnergyDensity::power(2, 3.0).unwrap();
        let rk = RestrictedConjugate::analytic(&f, 1.5).unwrap();
        let u = random_field(&g, 5);
        for seed in 0..5 {
            let mut d = random_field(&g, 100 + seed);
            for v in g.boundary_nodes() {
                d.values_mut()[v] = 0.0;
            }
            for dens in [&f as &dyn Density, &rk as &dyn Density] {
                let grad = energy_gradient(&g, &dens, &u).unwrap();
                let t = 1e-5;
                let fd = (energy(&g, &dens, &u.axpy(t, &d)).unwrap() - energy(&g, &dens, &u.axpy(-t, &d)).unwrap()) / (2.0 * t);
                let an = grad.dot(&d);
                assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn obstacle_projection_example() {
        let g = Grid::new(1, 4).unwrap();
        let u0 = ScalarField::zeros(g);
        let psi = (0..5).map(|v| if g.is_boundary(v) { None } else { Some(0.2) }).collect();
        let k = ConstraintSet::obstacle(u0, psi).unwrap();
        let p = k.project(&ScalarField::zeros(g));
        assert_eq!(p.values(), &[0.0, 0.2, 0.2, 0.2, 0.0]);
        assert_eq!(k.project(&p), p);
    }

    #[test]
    fn infeasible_obstacle_rejected() {
        let g = Grid::new(1, 4).unwrap();
        let psi = vec![Some(1.0), None, None, None, None];
        assert!(matches!(ConstraintSet::obstacle(ScalarField::zeros(g), psi), Err(DiscretizeError::Infeasible { .. })));
    }

    #[test]
    fn admissible_directions() {
        let g = Grid::new(1, 4).unwrap();
        let free = ConstraintSet::unconstrained(ScalarField::zeros(g));
        let psi = vec![None, Some(0.0), Some(0.0), Some(0.0), None];
        let obs = ConstraintSet::obstacle(ScalarField::zeros(g), psi).unwrap();
        let bump = ScalarField::new(g, vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        let dip = ScalarField::new(g, vec![0.0, 0.5, -1.0, 0.5, 0.0]).unwrap();
        assert!(admissible_direction_check(&free, &dip).unwrap());
        assert!(admissible_direction_check(&obs, &bump).unwrap());
        assert!(!admissible_direction_check(&obs, &dip).unwrap());
        let bad = ScalarField::new(g, vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(admissible_direction_check(&free, &bad).is_err());
    }

    #[test]
    fn harmonic_extension_of_affine_data_is_affine() {
        let g = Grid::new(2, 8).unwrap();
        let u0 = g.sample(|x| 1.0 + x.x1() - 2.0 * x.x2());
        let w = harmonic_extension(&g, &u0);
        assert!(w.dist_inf(&u0) < 1e-12);
    }
}
