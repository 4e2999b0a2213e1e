//! Fenchel conjugates and the restricted conjugate F_k.

mod certificates;
mod conjugate;
mod restricted;
mod sampled;

pub use certificates::{fenchel_certificate, fk_star_certificate, superlinear_dual_probe, FENCHEL_IDENTITY_TOL};
pub use conjugate::{
    conjugate_local_bound, conjugate_nd_bruteforce, conjugate_radial, conjugate_sup_at, probe_directions, probe_points,
    ConjugateHandle, ConjugateKind, GridConjugate, RadialGrid,
};
pub use restricted::{restricted_conjugate, RestrictedConjugate};
pub use sampled::{conjugate_1d, conjugate_at_sorted, linspace, SampledConvex1D};

use crate::energy::EnergyError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LegendreError {
    #[error("need at least 3 samples, got {0}")]
    TooFewNodes(usize),
    #[error("abscissae must be finite and strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("sample value at index {0} is not finite")]
    NonFinite(usize),
    #[error("samples are not convex: chord slope drops from {left} to {right} at chord {index}")]
    NonConvex { index: usize, left: f64, right: f64 },
    #[error("tail slope {slope} is inconsistent with the boundary chord slope {chord}")]
    BadTail { slope: f64, chord: f64 },
    #[error("energy '{0}' is not radial in ξ")]
    NotRadial(String),
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("grid resolution must be at least 64, got {0}")]
    Resolution(usize),
    #[error("conjugate handle belongs to '{handle}', not to '{energy}'")]
    SourceMismatch { handle: String, energy: String },
    #[error("inner maximization did not converge at x = {x}, ξ = {xi} (residual {residual:e})")]
    NoConvergence { x: String, xi: String, residual: f64 },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}
