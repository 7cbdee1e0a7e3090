//! Special functions needed by the gamma likelihood.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Trigamma function for `x > 0`.
///
/// Shifts the argument above 10 with `psi1(x) = psi1(x + 1) + 1/x^2`, then
/// sums the asymptotic Bernoulli series.
pub fn trigamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x^2) + sum B_2k / x^(2k+1)
    let series = inv2
        * (1.0 / 6.0
            - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + inv + 0.5 * inv2 + inv * series
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trigamma_known_values() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert_relative_eq!(trigamma(1.0), pi2 / 6.0, max_relative = 1e-12);
        assert_relative_eq!(trigamma(0.5), pi2 / 2.0, max_relative = 1e-12);
        assert_relative_eq!(trigamma(2.0), pi2 / 6.0 - 1.0, max_relative = 1e-12);
        assert!(trigamma(0.0).is_nan());
    }

    #[test]
    fn trigamma_is_derivative_of_digamma() {
        for &x in &[0.05, 0.3, 1.7, 9.9, 10.1, 250.0, 1e5] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert_relative_eq!(trigamma(x), fd, max_relative = 1e-6);
        }
    }
}
