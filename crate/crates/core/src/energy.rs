//! Non-autonomous convex energy densities F(x, ξ) and the energy zoo.
//!
//! Every density is normalized, F(x, 0) = 0 and F'(x, 0) = 0, nonnegative,
//! strictly convex and superlinear in ξ. Two zoo members
//! (`exponential_coeff`, `nearly_linear_double_phase`) have a conical kink at
//! ξ = 0; there `deriv` returns the subgradient 0.

use crate::coefficient::{CoefficientError, CoefficientField};
use crate::vector::Vec2N;
use crate::expr::Expr;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("unknown energy '{0}' (expected one of: {names})", names = EnergyKind::NAMES.join(", "))]
    UnknownName(String),
    #[error("energy '{energy}': parameter {param} out of range: {reason}")]
    ParameterOutOfRange { energy: String, param: String, reason: String },
    #[error("energy '{energy}': missing {what} '{name}'")]
    Missing { energy: String, what: &'static str, name: String },
    #[error("energy '{energy}': unexpected {what} '{name}'")]
    Unexpected { energy: String, what: &'static str, name: String },
    #[error(transparent)]
    Coefficient(#[from] CoefficientError),
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("inverse derivative did not converge at x = {x}, z = {z} (residual {residual:e})")]
    NoConvergence { x: String, z: String, residual: f64 },
}

/// Anything with a value and gradient in ξ at every x: energy densities,
/// restricted conjugates, and their wrappers.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: Vec2N, xi: Vec2N) -> f64;
    fn gradient(&self, x: Vec2N, xi: Vec2N) -> Vec2N;
    /// Both at once; override when they share work.
    fn value_and_gradient(&self, x: Vec2N, xi: Vec2N) -> (f64, Vec2N) {
        (self.value(x, xi), self.gradient(x, xi))
    }
}

impl<D: Density + ?Sized> Density for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: Vec2N, xi: Vec2N) -> f64 {
        (**self).value(x, xi)
    }
    fn gradient(&self, x: Vec2N, xi: Vec2N) -> Vec2N {
        (**self).gradient(x, xi)
    }
    fn value_and_gradient(&self, x: Vec2N, xi: Vec2N) -> (f64, Vec2N) {
        (**self).value_and_gradient(x, xi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnergyKind {
    /// |ξ|^p / p
    PowerP,
    /// |ξ|^p + a(x)|ξ|^q
    DoublePhase,
    /// exp(ω(x)|ξ|) − 1
    ExponentialCoeff,
    /// |ξ|^{p(x)} log(2 + |ξ|)
    PerturbedVariableExponent,
    /// |ξ| log(2 + |ξ|) + a(x)|ξ|^q
    NearlyLinearDoublePhase,
    /// |ξ|^p + a(x)|ξ₁|^q
    AnisotropicDoublePhase,
}

impl EnergyKind {
    pub const ALL: [EnergyKind; 6] = [
        EnergyKind::PowerP,
        EnergyKind::DoublePhase,
        EnergyKind::ExponentialCoeff,
        EnergyKind::PerturbedVariableExponent,
        EnergyKind::NearlyLinearDoublePhase,
        EnergyKind::AnisotropicDoublePhase,
    ];

    pub const NAMES: [&'static str; 6] = [
        "power_p",
        "double_phase",
        "exponential_coeff",
        "perturbed_variable_exponent",
        "nearly_linear_double_phase",
        "anisotropic_double_phase",
    ];

    pub fn name(self) -> &'static str {
        let i = EnergyKind::ALL.iter().position(|&k| k == self).expect("listed");
        EnergyKind::NAMES[i]
    }

    fn params(self) -> &'static [&'static str] {
        match self {
            EnergyKind::PowerP => &["p"],
            EnergyKind::DoublePhase | EnergyKind::AnisotropicDoublePhase => &["p", "q"],
            EnergyKind::NearlyLinearDoublePhase => &["q"],
            EnergyKind::ExponentialCoeff | EnergyKind::PerturbedVariableExponent => &[],
        }
    }

    fn coefficients(self) -> &'static [&'static str] {
        match self {
            EnergyKind::PowerP => &[],
            EnergyKind::DoublePhase
            | EnergyKind::NearlyLinearDoublePhase
            | EnergyKind::AnisotropicDoublePhase => &["a"],
            EnergyKind::ExponentialCoeff => &["omega"],
            EnergyKind::PerturbedVariableExponent => &["p"],
        }
    }
}

impl FromStr for EnergyKind {
    type Err = EnergyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnergyKind::NAMES
            .iter()
            .position(|&n| n == s)
            .map(|i| EnergyKind::ALL[i])
            .ok_or_else(|| EnergyError::UnknownName(s.to_string()))
    }
}

impl fmt::Display for EnergyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnergyFlags {
    pub strictly_convex: bool,
    pub superlinear: bool,
    pub radial_in_xi: bool,
    pub doubling: bool,
}

/// The profile f(x, ·) of a radial density F(x, ξ) = f(x, |ξ|) at a frozen x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialProfile {
    Power { p: f64 },
    DoublePhase { p: f64, q: f64, a: f64 },
    Exponential { omega: f64 },
    PerturbedVariableExponent { p: f64 },
    NearlyLinear { q: f64, a: f64 },
}

impl RadialProfile {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Power { p } => r.powf(p) / p,
            RadialProfile::DoublePhase { p, q, a } => r.powf(p) + a * r.powf(q),
            RadialProfile::Exponential { omega } => (omega * r).exp_m1(),
            RadialProfile::PerturbedVariableExponent { p } => r.powf(p) * (2.0 + r).ln(),
            RadialProfile::NearlyLinear { q, a } => r * (2.0 + r).ln() + a * r.powf(q),
        }
    }

    /// f'(r) for r > 0; at r = 0 the right derivative f'(0⁺).
    pub fn slope(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Power { p } => r.powf(p - 1.0),
            RadialProfile::DoublePhase { p, q, a } => p * r.powf(p - 1.0) + a * q * r.powf(q - 1.0),
            RadialProfile::Exponential { omega } => omega * (omega * r).exp(),
            RadialProfile::PerturbedVariableExponent { p } => {
                p * r.powf(p - 1.0) * (2.0 + r).ln() + r.powf(p) / (2.0 + r)
            }
            RadialProfile::NearlyLinear { q, a } => {
                (2.0 + r).ln() + r / (2.0 + r) + a * q * r.powf(q - 1.0)
            }
        }
    }

    /// f''(r); may be +∞ at r = 0 for exponents below 2.
    pub fn curvature(&self, r: f64) -> f64 {
        match *self {
            RadialProfile::Power { p } => (p - 1.0) * r.powf(p - 2.0),
            RadialProfile::DoublePhase { p, q, a } => {
                p * (p - 1.0) * r.powf(p - 2.0) + weighted(a * q * (q - 1.0), r, q - 2.0)
            }
            RadialProfile::Exponential { omega } => omega * omega * (omega * r).exp(),
            RadialProfile::PerturbedVariableExponent { p } => {
                let s = 2.0 + r;
                p * (p - 1.0) * r.powf(p - 2.0) * s.ln() + 2.0 * p * r.powf(p - 1.0) / s
                    - r.powf(p) / (s * s)
            }
            RadialProfile::NearlyLinear { q, a } => {
                let s = 2.0 + r;
                1.0 / s + 2.0 / (s * s) + weighted(a * q * (q - 1.0), r, q - 2.0)
            }
        }
    }

    /// f'(0⁺): zero for C¹ profiles, positive for profiles with a kink at 0.
    pub fn slope_at_zero(&self) -> f64 {
        match *self {
            RadialProfile::Exponential { omega } => omega,
            RadialProfile::NearlyLinear { .. } => std::f64::consts::LN_2,
            _ => 0.0,
        }
    }

    /// The radius ρ ≥ 0 with f'(ρ) = s, for s > f'(0⁺); 0 otherwise.
    ///
    /// Safeguarded Newton on the increasing map f'. The result satisfies
    /// |f'(ρ) − s| ≤ 1e−14·(1 + s) unless the bracket collapses to machine
    /// precision first.
    pub fn inverse_slope(&self, s: f64) -> f64 {
        if s <= self.slope_at_zero() {
            return 0.0;
        }
        if let RadialProfile::Power { p } = *self {
            return s.powf(1.0 / (p - 1.0));
        }
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        while self.slope(hi) < s {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        let tol = 1e-14 * (1.0 + s);
        let mut r = 0.5 * (lo + hi);
        for _ in 0..300 {
            let g = self.slope(r) - s;
            if g.abs() <= tol {
                return r;
            }
            if g < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return r;
            }
            let c = self.curvature(r);
            let newton = r - g / c;
            r = if c.is_finite() && c > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        r
    }

    /// f*(s) = sup_{ρ≥0} (sρ − f(ρ)) for s ≥ 0, by the maximizer f'(ρ) = s.
    pub fn conjugate(&self, s: f64) -> f64 {
        let s = s.abs();
        match *self {
            RadialProfile::Power { p } => {
                let pc = p / (p - 1.0);
                s.powf(pc) / pc
            }
            RadialProfile::Exponential { omega } => {
                if s <= omega {
                    0.0
                } else {
                    let t = s / omega;
                    t * t.ln() - t + 1.0
                }
            }
            _ => {
                let rho = self.inverse_slope(s);
                if rho == 0.0 {
                    0.0
                } else {
                    (s * rho - self.value(rho)).max(0.0)
                }
            }
        }
    }

    /// Whether `conjugate` is a closed form rather than a root-find.
    pub fn has_closed_form_conjugate(&self) -> bool {
        matches!(self, RadialProfile::Power { .. } | RadialProfile::Exponential { .. })
    }
}

/// A non-autonomous convex integrand F(x, ξ) on [0,1]ⁿ × ℝⁿ.
#[derive(Clone, Debug)]
pub struct EnergyDensity {
    kind: EnergyKind,
    dim: usize,
    params: BTreeMap<String, f64>,
    coeffs: BTreeMap<String, CoefficientField>,
    flags: EnergyFlags,
    deriv_scale: f64,
}

/// Builds a zoo energy, validating parameter ranges and coefficient bounds.
pub fn make_energy(
    name: &str,
    dim: usize,
    params: &BTreeMap<String, f64>,
    coeffs: BTreeMap<String, CoefficientField>,
) -> Result<EnergyDensity, EnergyError> {
    let kind: EnergyKind = name.parse()?;
    if dim != 1 && dim != 2 {
        return Err(EnergyError::Dimension(dim));
    }
    let energy = name.to_string();
    for p in kind.params() {
        if !params.contains_key(*p) {
            return Err(EnergyError::Missing { energy, what: "parameter", name: p.to_string() });
        }
    }
    for p in params.keys() {
        if !kind.params().contains(&p.as_str()) {
            return Err(EnergyError::Unexpected { energy, what: "parameter", name: p.clone() });
        }
    }
    for c in kind.coefficients() {
        if !coeffs.contains_key(*c) {
            return Err(EnergyError::Missing { energy, what: "coefficient", name: c.to_string() });
        }
    }
    for c in coeffs.keys() {
        if !kind.coefficients().contains(&c.as_str()) {
            return Err(EnergyError::Unexpected { energy, what: "coefficient", name: c.clone() });
        }
    }
    let bad = |param: &str, reason: String| EnergyError::ParameterOutOfRange {
        energy: name.to_string(),
        param: param.to_string(),
        reason,
    };
    let check_finite = |k: &str, v: f64| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(bad(k, format!("{v} is not finite")))
        }
    };
    for (k, &v) in params {
        check_finite(k, v)?;
    }
    if let Some(&p) = params.get("p") {
        if p <= 1.0 {
            return Err(bad("p", format!("need p > 1, got {p}")));
        }
        if let Some(&q) = params.get("q") {
            if q <= p {
                return Err(bad("q", format!("need q > p, got q = {q} <= p = {p}")));
            }
        }
    } else if let Some(&q) = params.get("q") {
        if q <= 1.0 {
            return Err(bad("q", format!("need q > 1, got {q}")));
        }
    }
    if let Some(a) = coeffs.get("a") {
        let (lo, hi) = a.bounds();
        if lo < 0.0 || !hi.is_finite() {
            return Err(bad("a", format!("need a(x) in [0, ∞) with finite bound, declared [{lo}, {hi}]")));
        }
    }
    if let Some(w) = coeffs.get("omega") {
        let (lo, hi) = w.bounds();
        if lo <= 0.0 || !hi.is_finite() {
            return Err(bad("omega", format!("need ω(x) in a compact subset of (0, ∞), declared [{lo}, {hi}]")));
        }
    }
    if kind == EnergyKind::PerturbedVariableExponent {
        let (lo, hi) = coeffs["p"].bounds();
        if lo <= 1.0 || !hi.is_finite() {
            return Err(bad("p", format!("need p(x) in a compact subset of (1, ∞), declared [{lo}, {hi}]")));
        }
    }
    let flags = EnergyFlags {
        strictly_convex: true,
        superlinear: true,
        radial_in_xi: kind != EnergyKind::AnisotropicDoublePhase,
        doubling: kind != EnergyKind::ExponentialCoeff,
    };
    Ok(EnergyDensity { kind, dim, params: params.clone(), coeffs, flags, deriv_scale: 1.0 })
}

/// One reference instance of each zoo member on [0, 1]ⁿ, with
/// x-dependent coefficients where the family has them.
///
/// The anisotropic member is two-dimensional only and is left out for n = 1.
pub fn zoo(dim: usize) -> Vec<EnergyDensity> {
    let field = |name: &str, src: &str, lo: f64, hi: f64| {
        CoefficientField::expression(name, Expr::parse(src).expect("valid expression"), dim, lo, hi)
            .expect("declared range holds")
    };
    let p = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>();
    let c = |name: &str, f: CoefficientField| BTreeMap::from([(name.to_string(), f)]);
    let mut out = vec![
        make_energy("power_p", dim, &p(&[("p", 3.0)]), BTreeMap::new()),
        make_energy("double_phase", dim, &p(&[("p", 2.0), ("q", 3.0)]), c("a", field("a", "x1", 0.0, 1.0))),
        make_energy("exponential_coeff", dim, &p(&[]), c("omega", field("omega", "1 + 0.5*x1", 1.0, 1.5))),
        make_energy("perturbed_variable_exponent", dim, &p(&[]), c("p", field("p", "1.5 + 0.5*x1", 1.5, 2.0))),
        make_energy("nearly_linear_double_phase", dim, &p(&[("q", 3.0)]), c("a", field("a", "x1", 0.0, 1.0))),
    ];
    if dim == 2 {
        out.push(make_energy(
            "anisotropic_double_phase",
            dim,
            &p(&[("p", 2.0), ("q", 4.0)]),
            c("a", field("a", "1 + x2", 1.0, 2.0)),
        ));
    }
    out.into_iter().map(|e| e.expect("reference parameters are valid")).collect()
}

impl EnergyDensity {
    /// Shorthand for `power_p` with the given exponent.
    pub fn power(dim: usize, p: f64) -> Result<Self, EnergyError> {
        make_energy("power_p", dim, &BTreeMap::from([("p".to_string(), p)]), BTreeMap::new())
    }

    /// Shorthand for `double_phase` with a constant or supplied modulating coefficient.
    pub fn double_phase(dim: usize, p: f64, q: f64, a: CoefficientField) -> Result<Self, EnergyError> {
        make_energy(
            "double_phase",
            dim,
            &BTreeMap::from([("p".to_string(), p), ("q".to_string(), q)]),
            BTreeMap::from([("a".to_string(), a)]),
        )
    }

    pub fn kind(&self) -> EnergyKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn flags(&self) -> EnergyFlags {
        self.flags
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn coefficients(&self) -> &BTreeMap<String, CoefficientField> {
        &self.coeffs
    }

    /// Scales the returned derivative by `factor`. Breaks every derivative
    /// identity; used as a negative control for the certificates.
    pub fn with_corrupted_derivative(mut self, factor: f64) -> Self {
        self.deriv_scale = factor;
        self
    }

    fn param(&self, k: &str) -> f64 {
        self.params[k]
    }

    fn coeff(&self, k: &str, x: Vec2N) -> f64 {
        self.coeffs[k].eval(x)
    }

    /// The radial profile at x, or `None` for non-radial energies.
    pub fn radial_profile(&self, x: Vec2N) -> Option<RadialProfile> {
        Some(match self.kind {
            EnergyKind::PowerP => RadialProfile::Power { p: self.param("p") },
            EnergyKind::DoublePhase => RadialProfile::DoublePhase {
                p: self.param("p"),
                q: self.param("q"),
                a: self.coeff("a", x),
            },
            EnergyKind::ExponentialCoeff => RadialProfile::Exponential { omega: self.coeff("omega", x) },
            EnergyKind::PerturbedVariableExponent => {
                RadialProfile::PerturbedVariableExponent { p: self.coeff("p", x) }
            }
            EnergyKind::NearlyLinearDoublePhase => RadialProfile::NearlyLinear {
                q: self.param("q"),
                a: self.coeff("a", x),
            },
            EnergyKind::AnisotropicDoublePhase => return None,
        })
    }

    /// f'(x, 0⁺), the radius of the ball on which F*(x, ·) vanishes (zero for
    /// energies that are C¹ at the origin).
    pub fn kink_slope(&self, x: Vec2N) -> f64 {
        self.radial_profile(x).map_or(0.0, |p| p.slope_at_zero())
    }

    pub fn eval(&self, x: Vec2N, xi: Vec2N) -> f64 {
        match self.radial_profile(x) {
            Some(prof) => prof.value(xi.norm()),
            None => {
                let (p, q, a) = (self.param("p"), self.param("q"), self.coeff("a", x));
                xi.norm().powf(p) + a * xi.x1().abs().powf(q)
            }
        }
    }

    pub fn deriv(&self, x: Vec2N, xi: Vec2N) -> Vec2N {
        let r = xi.norm();
        if r == 0.0 {
            return Vec2N::zero(xi.dim());
        }
        let g = match self.radial_profile(x) {
            Some(prof) => xi * (prof.slope(r) / r),
            None => {
                let (p, q, a) = (self.param("p"), self.param("q"), self.coeff("a", x));
                let mut g = xi * (p * r.powf(p - 2.0));
                let t = xi.x1();
                if t != 0.0 {
                    g.set(0, g.x1() + a * q * t.abs().powf(q - 1.0) * t.signum());
                }
                g
            }
        };
        g * self.deriv_scale
    }

    /// Hessian in ξ as a row-major 2×2 block (the second row and column are
    /// zero in 1D). Entries may be infinite at ξ = 0 for exponents below 2.
    pub fn hessian(&self, x: Vec2N, xi: Vec2N) -> [[f64; 2]; 2] {
        let r = xi.norm();
        let dim = xi.dim();
        let mut h = match self.radial_profile(x) {
            Some(prof) => {
                let c = prof.curvature(r);
                if r == 0.0 {
                    [[c, 0.0], [0.0, c]]
                } else {
                    let u = xi * (1.0 / r);
                    let t = prof.slope(r) / r;
                    let (u1, u2) = (u.x1(), u.x2());
                    [
                        [c * u1 * u1 + t * (1.0 - u1 * u1), (c - t) * u1 * u2],
                        [(c - t) * u1 * u2, c * u2 * u2 + t * (1.0 - u2 * u2)],
                    ]
                }
            }
            None => {
                let (p, q, a) = (self.param("p"), self.param("q"), self.coeff("a", x));
                let base = p * r.powf(p - 2.0);
                let mut h = if r == 0.0 {
                    [[base, 0.0], [0.0, base]]
                } else {
                    let u = xi * (1.0 / r);
                    let c = base * (p - 2.0);
                    let (u1, u2) = (u.x1(), u.x2());
                    [[base + c * u1 * u1, c * u1 * u2], [c * u1 * u2, base + c * u2 * u2]]
                };
                h[0][0] += weighted(a * q * (q - 1.0), xi.x1().abs(), q - 2.0);
                h
            }
        };
        if dim == 1 {
            h[0][1] = 0.0;
            h[1][0] = 0.0;
            h[1][1] = 0.0;
        }
        h
    }

    /// ξ with F'(x, ξ) = z, i.e. the gradient of the conjugate at z.
    ///
    /// For energies with a kink at the origin, every |z| ≤ f'(0⁺) maps to ξ = 0
    /// (the subdifferential inverse). Radial energies use a 1D root find;
    /// others use damped Newton on ξ ↦ F(x, ξ) − z·ξ.
    pub fn inverse_deriv(&self, x: Vec2N, z: Vec2N) -> Result<Vec2N, EnergyError> {
        let s = z.norm();
        if s == 0.0 {
            return Ok(Vec2N::zero(z.dim()));
        }
        if let Some(prof) = self.radial_profile(x) {
            let rho = prof.inverse_slope(s);
            if !rho.is_finite() {
                return Err(self.no_convergence(x, z, f64::INFINITY));
            }
            return Ok(z * (rho / s));
        }
        self.newton_inverse(x, z)
    }

    fn no_convergence(&self, x: Vec2N, z: Vec2N, residual: f64) -> EnergyError {
        EnergyError::NoConvergence { x: x.to_string(), z: z.to_string(), residual }
    }

    fn newton_inverse(&self, x: Vec2N, z: Vec2N) -> Result<Vec2N, EnergyError> {
        let (xi, res) = self.newton_core(x, z);
        if res <= 1e-10 * (1.0 + z.norm()) {
            Ok(xi)
        } else {
            Err(self.no_convergence(x, z, res))
        }
    }

    /// Best available ξ with F'(x, ξ) ≈ z and its residual |F'(x, ξ) − z|.
    ///
    /// Never fails; callers that only need a lower bound for the conjugate
    /// (any ξ gives z·ξ − F(x, ξ) ≤ F*(x, z)) use this directly.
    pub fn inverse_deriv_approx(&self, x: Vec2N, z: Vec2N) -> (Vec2N, f64) {
        if z.norm() == 0.0 {
            return (Vec2N::zero(z.dim()), 0.0);
        }
        if let Some(prof) = self.radial_profile(x) {
            let s = z.norm();
            let rho = prof.inverse_slope(s);
            let xi = z * (rho / s);
            return (xi, (self.deriv(x, xi) - z).norm());
        }
        self.newton_core(x, z)
    }

    fn newton_core(&self, x: Vec2N, z: Vec2N) -> (Vec2N, f64) {
        let dim = z.dim();
        let p = self.param("p");
        let s = z.norm();
        let phi = |xi: Vec2N| self.eval(x, xi) - z.dot(&xi);
        // start from the inverse of the isotropic part
        let mut xi = z * ((s / p).powf(1.0 / (p - 1.0)) / s);
        let tol = 1e-13 * (1.0 + s);
        let mut g = self.deriv(x, xi) - z;
        for _ in 0..500 {
            let gn = g.norm();
            if gn <= tol {
                return (xi, gn);
            }
            let h = self.hessian(x, xi);
            let mut d = solve_2x2(h, -g, dim).unwrap_or(-g);
            if !d.is_finite() || d.dot(&g) >= 0.0 {
                d = -g;
            }
            let f0 = phi(xi);
            let slope = g.dot(&d);
            let mut t = 1.0;
            let mut moved = false;
            // once the predicted decrease is below the roundoff of φ, the
            // line search cannot discriminate; judge by the residual instead
            let resolvable = -slope > 1e-13 * (1.0 + f0.abs());
            for _ in 0..if resolvable { 40 } else { 0 } {
                let cand = xi + d * t;
                if phi(cand) <= f0 + 1e-4 * t * slope {
                    xi = cand;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                // objective no longer resolves the decrease; trust the gradient residual
                let cand = xi + d;
                let gc = self.deriv(x, cand) - z;
                if gc.norm() < gn {
                    xi = cand;
                    g = gc;
                    continue;
                }
                break;
            }
            g = self.deriv(x, xi) - z;
        }
        let res = (self.deriv(x, xi) - z).norm();
        (xi, res)
    }
}

/// c·r^e, with a vanishing weight winning over an infinite power.
fn weighted(c: f64, r: f64, e: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * r.powf(e)
    }
}

/// Solves h·d = b for the active `dim`×`dim` block.
pub(crate) fn solve_2x2(h: [[f64; 2]; 2], b: Vec2N, dim: usize) -> Option<Vec2N> {
    if dim == 1 {
        let d = b.x1() / h[0][0];
        return (d.is_finite()).then(|| Vec2N::new1(d));
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(det.is_finite()) || det.abs() <= 1e-300 {
        return None;
    }
    let d = Vec2N::new2(
        (h[1][1] * b.x1() - h[0][1] * b.x2()) / det,
        (h[0][0] * b.x2() - h[1][0] * b.x1()) / det,
    );
    d.is_finite().then_some(d)
}

impl Density for EnergyDensity {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: Vec2N, xi: Vec2N) -> f64 {
        self.eval(x, xi)
    }
    fn gradient(&self, x: Vec2N, xi: Vec2N) -> Vec2N {
        self.deriv(x, xi)
    }
}
