//! Closed real intervals used for perturbation domains and coordinate ranges.

use std::fmt;

/// A closed interval `[lo, hi]` with `lo <= hi` (enforced by constructors;
/// modules treat a violated ordering as an empty/invalid domain error at the
/// point of use).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `i`-th of `n` evenly spaced points, endpoints included (`n >= 2`).
    /// The first and last points are exactly `lo` and `hi` so that round-off
    /// can never push a grid point outside the interval.
    pub fn lerp(&self, i: usize, n: usize) -> f64 {
        debug_assert!(n >= 2 && i < n);
        if i == 0 {
            self.lo
        } else if i == n - 1 {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * (i as f64) / ((n - 1) as f64)
        }
    }

    /// Evenly spaced grid over the interval, endpoints included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.midpoint()];
        }
        (0..n).map(|i| self.lerp(i, n)).collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
