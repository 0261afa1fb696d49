//! Values carried together with an error bound, and the geometric tail
//! sums used to certify truncations.

use serde::Serialize;
use std::fmt;

/// A computed value with a bound on its distance to the exact quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certified {
    pub value: f64,
    pub error_bound: f64,
}

impl Certified {
    pub fn exact(value: f64) -> Self {
        Self { value, error_bound: 0.0 }
    }

    pub fn new(value: f64, error_bound: f64) -> Self {
        Self { value, error_bound }
    }

    pub fn lower(&self) -> f64 {
        self.value - self.error_bound
    }

    pub fn upper(&self) -> f64 {
        self.value + self.error_bound
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.error_bound
    }
}

impl fmt::Display for Certified {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {:e}", self.value, self.error_bound)
    }
}

/// Evaluate `sum_j coeffs[j] * x^j` by Horner's rule.
pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Upper bound on `sum_{m >= 1} q^m * B(n0 + m)` where `B` is a polynomial
/// with nonnegative coefficients and `0 <= q < 1`.
///
/// Terms are summed explicitly until the ratio of consecutive terms is
/// provably below one for the rest of the series; the remainder is then
/// closed with a geometric bound. For `n >= 1`,
/// `B(n+1)/B(n) <= ((n+1)/n)^d`, which is decreasing in `n`.
pub fn geometric_poly_tail(q: f64, coeffs: &[f64], n0: usize) -> f64 {
    debug_assert!((0.0..1.0).contains(&q));
    debug_assert!(coeffs.iter().all(|c| *c >= 0.0));
    if q == 0.0 || coeffs.iter().all(|c| *c == 0.0) {
        return 0.0;
    }
    let degree = coeffs.iter().rposition(|c| *c > 0.0).unwrap_or(0) as i32;
    let target = 0.5 * (1.0 + q);
    let mut sum = 0.0;
    let mut weight = 1.0;
    let mut m = 1usize;
    loop {
        let n = n0 + m;
        weight *= q;
        let term = weight * poly_eval(coeffs, n as f64);
        sum += term;
        let growth = ((n as f64 + 1.0) / n as f64).powi(degree);
        let ratio = q * growth;
        if ratio <= target {
            return sum + term * ratio / (1.0 - ratio);
        }
        if weight == 0.0 {
            return sum;
        }
        m += 1;
    }
}
