//! Piecewise-linear convex functions on the line and their exact conjugates.

use super::LegendreError;
use crate::vector::ExtReal;

/// Relative tolerance for chord-slope convexity violations.
const CONVEXITY_TOL: f64 = 1e-10;
/// Chord slopes closer than this (relative) are merged into one conjugate node.
const MERGE_TOL: f64 = 1e-13;

/// A convex function sampled at strictly increasing abscissae and linearly
/// interpolated between them.
///
/// Outside the sample window each side is either affine with the given
/// slope (`Finite`) or +∞ (`PosInf`, a vertical wall).
#[derive(Clone, Debug, PartialEq)]
pub struct SampledConvex1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    left: ExtReal,
    right: ExtReal,
}

impl SampledConvex1D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, left: ExtReal, right: ExtReal) -> Result<Self, LegendreError> {
        if xs.len() != ys.len() || xs.len() < 3 {
            return Err(LegendreError::TooFewNodes(xs.len().min(ys.len())));
        }
        for i in 0..xs.len() {
            if !xs[i].is_finite() || (i > 0 && xs[i] <= xs[i - 1]) {
                return Err(LegendreError::NotIncreasing(i));
            }
            if !ys[i].is_finite() {
                return Err(LegendreError::NonFinite(i));
            }
        }
        let f = Self { xs, ys, left, right };
        let s = f.chord_slopes();
        for i in 1..s.len() {
            if s[i] < s[i - 1] - CONVEXITY_TOL * (1.0 + s[i - 1].abs()) {
                return Err(LegendreError::NonConvex { index: i, left: s[i - 1], right: s[i] });
            }
        }
        if let ExtReal::Finite(l) = left {
            if l > s[0] + CONVEXITY_TOL * (1.0 + s[0].abs()) {
                return Err(LegendreError::BadTail { slope: l, chord: s[0] });
            }
        }
        if let ExtReal::Finite(r) = right {
            let last = s[s.len() - 1];
            if r < last - CONVEXITY_TOL * (1.0 + last.abs()) {
                return Err(LegendreError::BadTail { slope: r, chord: last });
            }
        }
        Ok(f)
    }

    /// Samples `f` at `n` equispaced nodes on `[a, b]` with walls outside.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, LegendreError> {
        let xs = linspace(a, b, n);
        let ys = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, ys, ExtReal::PosInf, ExtReal::PosInf)
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn left_slope(&self) -> ExtReal {
        self.left
    }

    pub fn right_slope(&self) -> ExtReal {
        self.right
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// The sample window `[x_0, x_{N−1}]`.
    pub fn window(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Slopes of consecutive chords.
    pub fn chord_slopes(&self) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    /// The interpolant, extended by the tails.
    pub fn eval(&self, t: f64) -> ExtReal {
        let n = self.xs.len();
        if t < self.xs[0] {
            return match self.left {
                ExtReal::Finite(l) => ExtReal::Finite(self.ys[0] + l * (t - self.xs[0])),
                ExtReal::PosInf => ExtReal::PosInf,
            };
        }
        if t > self.xs[n - 1] {
            return match self.right {
                ExtReal::Finite(r) => ExtReal::Finite(self.ys[n - 1] + r * (t - self.xs[n - 1])),
                ExtReal::PosInf => ExtReal::PosInf,
            };
        }
        let i = self.xs.partition_point(|&x| x <= t).clamp(1, n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let w = (t - x0) / (x1 - x0);
        ExtReal::Finite(self.ys[i - 1] * (1.0 - w) + self.ys[i] * w)
    }
}

/// `n` equispaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { b } else { a + i as f64 * h }).collect()
}

/// Monotone chord slopes with near-duplicates collapsed.
///
/// Returns `(slope, node)` pairs: on the conjugate side the breakpoint
/// `slope` is where node `node` stops being the maximizer.
fn breakpoints(f: &SampledConvex1D) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::with_capacity(f.len());
    for (i, s) in f.chord_slopes().into_iter().enumerate() {
        match out.last() {
            Some(&(prev, _)) if s <= prev + MERGE_TOL * (1.0 + prev.abs()) => {}
            _ => out.push((s, i)),
        }
    }
    out
}

/// Discrete Legendre transform of the interpolant: `s ↦ sup_t (s·t − f(t))`.
///
/// The result is exact for the piecewise-linear input (with its tails). Its
/// nodes are the chord slopes of `f`; collinear runs collapse to one node.
/// Input walls become affine output tails with slope equal to the window
/// endpoint, and affine input tails become output walls.
pub fn conjugate_1d(f: &SampledConvex1D) -> Result<SampledConvex1D, LegendreError> {
    let n = f.len();
    let bps = breakpoints(f);
    let mut xs = Vec::with_capacity(bps.len() + 2);
    let mut ys = Vec::with_capacity(bps.len() + 2);

    if let ExtReal::Finite(l) = f.left {
        if l < bps[0].0 - MERGE_TOL * (1.0 + l.abs()) {
            xs.push(l);
            ys.push(l * f.xs[0] - f.ys[0]);
        }
    }
    for &(s, i) in &bps {
        xs.push(s);
        ys.push(s * f.xs[i] - f.ys[i]);
    }
    if let ExtReal::Finite(r) = f.right {
        let last = bps[bps.len() - 1].0;
        if r > last + MERGE_TOL * (1.0 + r.abs()) {
            xs.push(r);
            ys.push(r * f.xs[n - 1] - f.ys[n - 1]);
        }
    }
    let left = match f.left {
        ExtReal::PosInf => ExtReal::Finite(f.xs[0]),
        ExtReal::Finite(_) => ExtReal::PosInf,
    };
    let right = match f.right {
        ExtReal::PosInf => ExtReal::Finite(f.xs[n - 1]),
        ExtReal::Finite(_) => ExtReal::PosInf,
    };
    // fewer than three vertices: pad along an affine output tail, or split
    // the widest gap, so the representation keeps N ≥ 3
    while xs.len() < 3 {
        let m = xs.len();
        if let ExtReal::Finite(r) = right {
            xs.push(xs[m - 1] + 1.0);
            ys.push(ys[m - 1] + r);
        } else if let ExtReal::Finite(l) = left {
            xs.insert(0, xs[0] - 1.0);
            ys.insert(0, ys[0] - l);
        } else if m == 2 {
            xs.insert(1, 0.5 * (xs[0] + xs[1]));
            ys.insert(1, 0.5 * (ys[0] + ys[1]));
        } else {
            // finite at a single slope only
            return Err(LegendreError::TooFewNodes(m));
        }
    }
    SampledConvex1D::new(xs, ys, left, right)
}

/// Evaluates the conjugate of `f` at sorted slopes by a single merge pass.
///
/// Runs in O(N + M) for N samples and M slopes; each value is
/// `max_i (s·x_i − f_i)`, or +∞ where an affine tail of `f` makes the
/// supremum unbounded.
pub fn conjugate_at_sorted(f: &SampledConvex1D, slopes: &[f64]) -> Vec<ExtReal> {
    debug_assert!(slopes.windows(2).all(|w| w[0] <= w[1]), "slopes must be sorted");
    let chords = f.chord_slopes();
    let mut i = 0;
    slopes
        .iter()
        .map(|&s| {
            let below_left = matches!(f.left, ExtReal::Finite(l) if s < l);
            let above_right = matches!(f.right, ExtReal::Finite(r) if s > r);
            if below_left || above_right {
                return ExtReal::PosInf;
            }
            while i < chords.len() && s > chords[i] {
                i += 1;
            }
            ExtReal::Finite(s * f.xs[i] - f.ys[i])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: ExtReal, b: f64, tol: f64) -> bool {
        matches!(a, ExtReal::Finite(v) if (v - b).abs() <= tol)
    }

    #[test]
    fn quadratic_is_self_conjugate_up_to_interpolation_error() {
        let f = SampledConvex1D::from_fn(-5.0, 5.0, 1001, |t| 0.5 * t * t).unwrap();
        let g = conjugate_1d(&f).unwrap();
        let h = 0.01;
        let bound = h * h / 8.0 * (1.0 + 1e-9);
        let (a, b) = g.window();
        for i in 0..=2000 {
            let s = a + (b - a) * i as f64 / 2000.0;
            assert!(approx(g.eval(s), 0.5 * s * s, bound), "s = {s}");
        }
    }

    #[test]
    fn absolute_value_conjugates_to_indicator_of_unit_interval() {
        let xs = linspace(-2.0, 2.0, 41);
        let ys = xs.iter().map(|t: &f64| t.abs()).collect();
        let f = SampledConvex1D::new(xs, ys, ExtReal::Finite(-1.0), ExtReal::Finite(1.0)).unwrap();
        let g = conjugate_1d(&f).unwrap();
        assert!(g.len() >= 3);
        for s in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert!(approx(g.eval(s), 0.0, 1e-15), "s = {s}");
        }
        assert_eq!(g.eval(1.5), ExtReal::PosInf);
        assert_eq!(g.eval(-1.0001), ExtReal::PosInf);
        let merged = conjugate_at_sorted(&f, &[-1.5, -1.0, 0.0, 1.0, 1.5]);
        assert_eq!(merged[0], ExtReal::PosInf);
        assert_eq!(merged[4], ExtReal::PosInf);
        assert!(approx(merged[2], 0.0, 0.0));
    }

    #[test]
    fn even_exponential_matches_entropy_oracle() {
        let f = SampledConvex1D::from_fn(-5.0, 5.0, 1001, |t| t.abs().exp_m1()).unwrap();
        let g = conjugate_1d(&f).unwrap();
        let oracle = |s: f64| s * s.ln() - s + 1.0;
        assert!(approx(g.eval(1.0), 0.0, 1e-15));
        let e = std::f64::consts::E;
        let h: f64 = 0.01;
        assert!(approx(g.eval(e), oracle(e), h * h * (1.0 + h).exp() / 8.0));
        assert!((oracle(e) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn biconjugate_reproduces_interior_nodes() {
        let f = SampledConvex1D::from_fn(-3.0, 2.0, 257, |t| (t - 0.3).powi(4) + t.exp()).unwrap();
        let ff = conjugate_1d(&conjugate_1d(&f).unwrap()).unwrap();
        for (x, y) in f.abscissae()[1..256].iter().zip(&f.values()[1..256]) {
            assert!(approx(ff.eval(*x), *y, 1e-12 * (1.0 + y.abs())), "x = {x}");
        }
    }

    #[test]
    fn merge_pass_agrees_with_brute_max() {
        let f = SampledConvex1D::from_fn(-2.0, 2.0, 101, |t| t * t + 0.5 * t).unwrap();
        let slopes: Vec<f64> = linspace(-6.0, 6.0, 97);
        let merged = conjugate_at_sorted(&f, &slopes);
        for (s, v) in slopes.iter().zip(merged) {
            let brute = f
                .abscissae()
                .iter()
                .zip(f.values())
                .map(|(x, y)| s * x - y)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(approx(v, brute, 1e-12));
        }
    }

    #[test]
    fn rejects_nonconvex_and_malformed_samples() {
        let bump = SampledConvex1D::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], ExtReal::PosInf, ExtReal::PosInf);
        assert!(matches!(bump, Err(LegendreError::NonConvex { .. })));
        let short = SampledConvex1D::new(vec![0.0, 1.0], vec![0.0, 1.0], ExtReal::PosInf, ExtReal::PosInf);
        assert!(matches!(short, Err(LegendreError::TooFewNodes(2))));
        let unsorted = SampledConvex1D::new(vec![0.0, 2.0, 1.0], vec![0.0; 3], ExtReal::PosInf, ExtReal::PosInf);
        assert!(matches!(unsorted, Err(LegendreError::NotIncreasing(2))));
        let steep_tail = SampledConvex1D::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0], ExtReal::Finite(2.0), ExtReal::PosInf);
        assert!(matches!(steep_tail, Err(LegendreError::BadTail { .. })));
    }
}
