//! Deterministic low-discrepancy sampling used by the growth probes and
//! certificates.

use crate::vector::Vec2N;
use std::f64::consts::TAU;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `index` in the given base (van der Corput).
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// A Halton sequence in up to eight dimensions.
///
/// The `offset` skips the first points of the sequence, which are poorly
/// spread in the higher bases; distinct offsets give distinct streams.
#[derive(Clone, Debug)]
pub struct Halton {
    dims: usize,
    next: u64,
}

impl Halton {
    pub fn new(dims: usize, offset: u64) -> Self {
        assert!(dims <= PRIMES.len(), "Halton sequence supports at most 8 dimensions");
        Self { dims, next: 20 + offset }
    }

    pub fn next_point(&mut self) -> [f64; 8] {
        let mut p = [0.0; 8];
        for (d, slot) in p.iter_mut().enumerate().take(self.dims) {
            *slot = radical_inverse(self.next, PRIMES[d]);
        }
        self.next += 1;
        p
    }
}

/// Maps unit-cube coordinates to a point of Ω = [0,1]ⁿ.
pub fn omega_point(dim: usize, u: &[f64]) -> Vec2N {
    if dim == 1 {
        Vec2N::new1(u[0])
    } else {
        Vec2N::new2(u[0], u[1])
    }
}

/// Maps unit-cube coordinates to a point of the closed ball of radius `r`,
/// uniformly in volume. Consumes `dim` coordinates.
pub fn ball_point(dim: usize, r: f64, u: &[f64]) -> Vec2N {
    if dim == 1 {
        Vec2N::new1(r * (2.0 * u[0] - 1.0))
    } else {
        Vec2N::polar(2, r * u[0].sqrt(), TAU * u[1])
    }
}

/// Maps one coordinate to a point of the sphere of radius `r` (two points in 1D).
pub fn sphere_point(dim: usize, r: f64, u: f64) -> Vec2N {
    if dim == 1 {
        Vec2N::new1(if u < 0.5 { -r } else { r })
    } else {
        Vec2N::polar(2, r, TAU * u)
    }
}

/// A small deterministic generator for test-direction battery and random
/// feasible fields (SplitMix64). Not for statistics.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        // 5 = 12 in base 3, reflected: 2/3 + 1/9
        assert!((radical_inverse(5, 3) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn halton_points_stay_in_unit_cube() {
        let mut h = Halton::new(4, 0);
        for _ in 0..1000 {
            let p = h.next_point();
            assert!(p[..4].iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }

    #[test]
    fn ball_points_stay_in_ball() {
        let mut h = Halton::new(2, 3);
        for _ in 0..1000 {
            let p = h.next_point();
            assert!(ball_point(2, 1.5, &p).norm() <= 1.5 + 1e-15);
            assert!(ball_point(1, 1.5, &p).norm() <= 1.5 + 1e-15);
        }
    }

    #[test]
    fn splitmix_is_reproducible() {
        let mut a = SplitMix64::new(7);
        let mut b = SplitMix64::new(7);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
