//! Gamma–Poisson (negative binomial) marginal.

use crate::special::{ln_factorial, ln_gamma};

/// `log P(N = n)` when `N | λ ~ Poisson(λE)` and `λ ~ Gamma(shape, rate)`:
///
/// `ln Γ(n+α) - ln Γ(α) - ln n! + α ln(β/(E+β)) + n ln(E/(E+β))`.
///
/// With `E = 0` the count is 0 almost surely. Returns NaN for a
/// nonpositive shape or rate.
pub fn nb_ln_marginal(n: u64, shape: f64, rate: f64, e: f64) -> f64 {
    if !(shape > 0.0 && rate > 0.0 && e >= 0.0) {
        return f64::NAN;
    }
    if e == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    let l1p = (e / rate).ln_1p();
    let head = if n == 0 { 0.0 } else { ln_gamma(nf + shape) - ln_gamma(shape) - ln_factorial(n) + nf * (e.ln() - rate.ln()) };
    head - (shape + nf) * l1p
}

/// [`nb_ln_marginal`] on the probability scale.
pub fn nb_marginal(n: u64, shape: f64, rate: f64, e: f64) -> f64 {
    nb_ln_marginal(n, shape, rate, e).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_case() {
        assert!((nb_marginal(0, 1.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((nb_marginal(3, 1.0, 1.0, 1.0) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn normalises() {
        let s: f64 = (0..=500).map(|n| nb_marginal(n, 2.0, 3.0, 5.0)).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_baseline() {
        assert_eq!(nb_marginal(0, 2.0, 3.0, 0.0), 1.0);
        assert_eq!(nb_marginal(2, 2.0, 3.0, 0.0), 0.0);
        assert!(nb_marginal(1, -1.0, 3.0, 1.0).is_nan());
    }
}
