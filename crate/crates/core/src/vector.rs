//! Small fixed-capacity vectors in ℝ¹ or ℝ², and extended reals.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A point or direction in ℝⁿ with n ∈ {1, 2}.
///
/// In one dimension the second slot is kept at zero, so norms and dot
/// products need no special casing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2N {
    c: [f64; 2],
    dim: usize,
}

impl Vec2N {
    pub fn new1(a: f64) -> Self {
        Self { c: [a, 0.0], dim: 1 }
    }

    pub fn new2(a: f64, b: f64) -> Self {
        Self { c: [a, b], dim: 2 }
    }

    pub fn zero(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2, got {dim}");
        Self { c: [0.0; 2], dim }
    }

    /// Builds a vector from the leading `dim` entries of `s`.
    pub fn from_slice(s: &[f64]) -> Self {
        match s.len() {
            1 => Self::new1(s[0]),
            2 => Self::new2(s[0], s[1]),
            n => panic!("dimension must be 1 or 2, got {n}"),
        }
    }

    /// `r` times the unit vector at angle `theta` (only the first component in 1D,
    /// where `theta` is rounded to a sign).
    pub fn polar(dim: usize, r: f64, theta: f64) -> Self {
        if dim == 1 {
            Self::new1(if theta.cos() >= 0.0 { r } else { -r })
        } else {
            Self::new2(r * theta.cos(), r * theta.sin())
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        debug_assert!(i < self.dim);
        self.c[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: f64) {
        debug_assert!(i < self.dim);
        self.c[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.c[0]
    }

    /// Second component; zero in 1D.
    #[inline]
    pub fn x2(&self) -> f64 {
        self.c[1]
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> f64 {
        self.c[0] * other.c[0] + self.c[1] * other.c[1]
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.c[0].hypot(self.c[1])
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    /// Unit vector in the direction of `self`, or `None` at the origin.
    pub fn unit(&self) -> Option<Self> {
        let r = self.norm();
        (r > 0.0).then(|| *self * (1.0 / r))
    }

    /// Rotation by +90° (zero in 1D).
    pub fn perp(&self) -> Self {
        if self.dim == 1 {
            Self::zero(1)
        } else {
            Self::new2(-self.c[1], self.c[0])
        }
    }

    pub fn angle(&self) -> f64 {
        self.c[1].atan2(self.c[0])
    }

    pub fn is_finite(&self) -> bool {
        self.c[0].is_finite() && self.c[1].is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.c[0].abs().max(self.c[1].abs())
    }

    /// Orthogonal projection onto the closed ball of radius `radius`.
    pub fn clamp_norm(&self, radius: f64) -> Self {
        let r = self.norm();
        if r > radius {
            *self * (radius / r)
        } else {
            *self
        }
    }
}

impl Add for Vec2N {
    type Output = Vec2N;
    #[inline]
    fn add(self, rhs: Vec2N) -> Vec2N {
        debug_assert_eq!(self.dim, rhs.dim);
        Vec2N { c: [self.c[0] + rhs.c[0], self.c[1] + rhs.c[1]], dim: self.dim }
    }
}

impl Sub for Vec2N {
    type Output = Vec2N;
    #[inline]
    fn sub(self, rhs: Vec2N) -> Vec2N {
        debug_assert_eq!(self.dim, rhs.dim);
        Vec2N { c: [self.c[0] - rhs.c[0], self.c[1] - rhs.c[1]], dim: self.dim }
    }
}

impl AddAssign for Vec2N {
    fn add_assign(&mut self, rhs: Vec2N) {
        *self = *self + rhs;
    }
}

impl SubAssign for Vec2N {
    fn sub_assign(&mut self, rhs: Vec2N) {
        *self = *self - rhs;
    }
}

impl Mul<f64> for Vec2N {
    type Output = Vec2N;
    #[inline]
    fn mul(self, s: f64) -> Vec2N {
        Vec2N { c: [self.c[0] * s, self.c[1] * s], dim: self.dim }
    }
}

impl Mul<Vec2N> for f64 {
    type Output = Vec2N;
    #[inline]
    fn mul(self, v: Vec2N) -> Vec2N {
        v * self
    }
}

impl Neg for Vec2N {
    type Output = Vec2N;
    fn neg(self) -> Vec2N {
        self * -1.0
    }
}

impl fmt::Display for Vec2N {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim == 1 {
            write!(f, "({})", self.c[0])
        } else {
            write!(f, "({}, {})", self.c[0], self.c[1])
        }
    }
}

impl Serialize for Vec2N {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec2N {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        if v.len() == 1 || v.len() == 2 {
            Ok(Vec2N::from_slice(&v))
        } else {
            Err(serde::de::Error::custom(format!(
                "expected 1 or 2 components, got {}",
                v.len()
            )))
        }
    }
}

/// A real number or +∞. Never NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    /// Wraps a float; `+inf` maps to [`ExtReal::PosInf`].
    ///
    /// # Panics
    /// On NaN or `-inf`, which have no meaning for conjugates of nonnegative functions.
    pub fn from_f64(v: f64) -> Self {
        assert!(!v.is_nan(), "ExtReal cannot hold NaN");
        if v == f64::INFINITY {
            ExtReal::PosInf
        } else {
            assert!(v.is_finite(), "ExtReal cannot hold -inf");
            ExtReal::Finite(v)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// The value as a float, with +∞ mapped to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("INF"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() => Ok(ExtReal::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(ExtReal::PosInf),
            _ => Err(serde::de::Error::custom("expected a finite number or \"inf\"")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_vectors_keep_second_slot_zero() {
        let v = Vec2N::new1(-3.0);
        assert_eq!(v.norm(), 3.0);
        assert_eq!(v.x2(), 0.0);
        assert_eq!(v.perp(), Vec2N::zero(1));
        assert_eq!(Vec2N::polar(1, 2.0, std::f64::consts::PI), Vec2N::new1(-2.0));
    }

    #[test]
    fn clamp_norm_projects_onto_ball() {
        let v = Vec2N::new2(3.0, 4.0).clamp_norm(1.0);
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert_eq!(Vec2N::new2(0.3, 0.4).clamp_norm(1.0), Vec2N::new2(0.3, 0.4));
    }

    #[test]
    fn ext_real_orders_infinity_last() {
        assert!(ExtReal::Finite(1e300) < ExtReal::PosInf);
        assert_eq!(ExtReal::from_f64(f64::INFINITY), ExtReal::PosInf);
    }

    #[test]
    #[should_panic]
    fn ext_real_rejects_nan() {
        ExtReal::from_f64(f64::NAN);
    }

    #[test]
    fn ext_real_serde_uses_inf_marker() {
        let s = serde_json::to_string(&[ExtReal::Finite(0.5), ExtReal::PosInf]).unwrap();
        assert_eq!(s, "[0.5,\"inf\"]");
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![ExtReal::Finite(0.5), ExtReal::PosInf]);
    }
}
