//! Restricted conjugates, Lipschitz regularization of convex energies, and
//! a discretized constrained minimization scheme built on them.

pub mod coefficient;
pub mod discretize;
pub mod energy;
pub mod expr;
pub mod extension;
pub mod growth;
pub mod legendre;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod vector;

pub use coefficient::CoefficientField;
pub use energy::{make_energy, zoo, Density, EnergyDensity, EnergyKind};
pub use legendre::{ConjugateHandle, RestrictedConjugate};
pub use report::{Certificate, CheckResult};
pub use vector::{ExtReal, Vec2N};
