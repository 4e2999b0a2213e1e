//! Continuous coefficient fields a(x), ω(x), p(x) on Ω = [0,1]ⁿ.

use crate::expr::Expr;
use crate::vector::Vec2N;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("coefficient '{name}' leaves its declared range [{lo}, {hi}]: value {value} at {at}")]
    OutOfRange { name: String, lo: f64, hi: f64, value: f64, at: String },
    #[error("coefficient '{name}': {reason}")]
    Invalid { name: String, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Constant(f64),
    Expression(Expr),
    /// Node samples on a uniform (cells+1)ⁿ grid over [0,1]ⁿ, row-major with x1 fastest.
    Samples { dim: usize, cells: usize, values: Vec<f64> },
}

/// A continuous scalar field over Ω with declared range bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    kind: Kind,
    lo: f64,
    hi: f64,
}

/// Resolution of the sweep used to verify the declared range at construction.
const RANGE_CHECK_CELLS: usize = 64;

impl CoefficientField {
    pub fn constant(v: f64) -> Self {
        Self { kind: Kind::Constant(v), lo: v, hi: v }
    }

    /// A closed-form field, checked against `[lo, hi]` on a 65ⁿ node sweep.
    pub fn expression(name: &str, expr: Expr, dim: usize, lo: f64, hi: f64) -> Result<Self, CoefficientError> {
        if dim == 1 && expr.uses_x2() {
            return Err(CoefficientError::Invalid {
                name: name.into(),
                reason: "references x2 on a one-dimensional domain".into(),
            });
        }
        let f = Self { kind: Kind::Expression(expr), lo, hi };
        f.check_range(name, dim)?;
        Ok(f)
    }

    /// Bilinearly (linearly in 1D) interpolated node samples.
    pub fn samples(name: &str, dim: usize, cells: usize, values: Vec<f64>, lo: f64, hi: f64) -> Result<Self, CoefficientError> {
        let expected = (cells + 1).pow(dim as u32);
        if cells == 0 || values.len() != expected {
            return Err(CoefficientError::Invalid {
                name: name.into(),
                reason: format!("expected {expected} node samples, got {}", values.len()),
            });
        }
        for &v in &values {
            if !v.is_finite() || v < lo || v > hi {
                return Err(CoefficientError::OutOfRange {
                    name: name.into(),
                    lo,
                    hi,
                    value: v,
                    at: "a sample node".into(),
                });
            }
        }
        Ok(Self { kind: Kind::Samples { dim, cells, values }, lo, hi })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, Kind::Constant(_))
    }

    /// True when the field is identically zero.
    pub fn is_zero(&self) -> bool {
        self.lo == 0.0 && self.hi == 0.0
    }

    pub fn eval(&self, x: Vec2N) -> f64 {
        match &self.kind {
            Kind::Constant(v) => *v,
            Kind::Expression(e) => e.eval(x),
            Kind::Samples { dim, cells, values } => interpolate(*dim, *cells, values, x),
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::Constant(v) => format!("{v}"),
            Kind::Expression(e) => e.source().to_string(),
            Kind::Samples { cells, .. } => format!("samples({cells} cells)"),
        }
    }

    fn check_range(&self, name: &str, dim: usize) -> Result<(), CoefficientError> {
        let m = RANGE_CHECK_CELLS;
        let h = 1.0 / m as f64;
        let ny = if dim == 2 { m + 1 } else { 1 };
        for j in 0..ny {
            for i in 0..=m {
                let x = if dim == 1 { Vec2N::new1(i as f64 * h) } else { Vec2N::new2(i as f64 * h, j as f64 * h) };
                let v = self.eval(x);
                if !v.is_finite() || v < self.lo || v > self.hi {
                    return Err(CoefficientError::OutOfRange {
                        name: name.into(),
                        lo: self.lo,
                        hi: self.hi,
                        value: v,
                        at: x.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn interpolate(dim: usize, cells: usize, values: &[f64], x: Vec2N) -> f64 {
    let locate = |t: f64| {
        let s = (t.clamp(0.0, 1.0)) * cells as f64;
        let i = (s.floor() as usize).min(cells - 1);
        (i, s - i as f64)
    };
    let (i, tx) = locate(x.x1());
    if dim == 1 {
        return values[i] * (1.0 - tx) + values[i + 1] * tx;
    }
    let (j, ty) = locate(x.x2());
    let row = cells + 1;
    let v00 = values[j * row + i];
    let v10 = values[j * row + i + 1];
    let v01 = values[(j + 1) * row + i];
    let v11 = values[(j + 1) * row + i + 1];
    (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
}
