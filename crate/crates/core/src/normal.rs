//! Standard normal density and distribution function.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(x), accurate in both tails.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn sqrt_2pi() -> f64 {
    (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((cdf(0.5) - 0.691_462_461_274_013_1).abs() < 1e-15);
        assert!((cdf(-0.5) - 0.308_537_538_725_986_9).abs() < 1e-15);
        let tail = cdf(-10.0);
        assert!((tail / 7.619_853_024_160_526e-24 - 1.0).abs() < 1e-12, "{tail:e}");
        assert!((pdf(0.0) * sqrt_2pi() - 1.0).abs() < 1e-15);
    }
}
