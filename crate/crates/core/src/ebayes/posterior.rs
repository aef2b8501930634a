//! Posterior of `λ` for one cell.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use super::nb::nb_ln_marginal;
use super::{GammaComponent, MixturePrior};
use crate::special::{ln_gamma, log_sum_exp, poisson_ln_pmf};

/// Margin above 1 in `P(λ > 1 + ε | N)`.
pub const DEFAULT_EPSILON: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Updated gamma mixture, or masses on the prior's support.
    pub posterior: MixturePrior,
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    /// `P(λ > 1 + ε | N)`.
    pub prob_signal: f64,
    pub epsilon: f64,
    /// `E = 0`: the data carry no information and the posterior is the prior.
    pub prior_only: bool,
}

/// `log f(N | E)` under `prior`.
pub(crate) fn ln_marginal(prior: &MixturePrior, n: u64, e: f64) -> f64 {
    let terms: Vec<f64> = match prior {
        MixturePrior::GammaMixture { components } => components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight.ln() + nb_ln_marginal(n, c.shape, c.rate, e))
            .collect(),
        MixturePrior::DiscreteGrid { support, masses } => support
            .iter()
            .zip(masses)
            .filter(|(_, &g)| g > 0.0)
            .map(|(&v, &g)| g.ln() + poisson_ln_pmf(n, v * e))
            .collect(),
    };
    log_sum_exp(&terms)
}

/// Conjugate update of `prior` after observing `N = n` with baseline `e`.
pub fn update(prior: &MixturePrior, n: u64, e: f64) -> MixturePrior {
    if e <= 0.0 {
        return prior.clone();
    }
    match prior {
        MixturePrior::GammaMixture { components } => {
            let logw: Vec<f64> = components
                .iter()
                .map(|c| if c.weight > 0.0 { c.weight.ln() + nb_ln_marginal(n, c.shape, c.rate, e) } else { f64::NEG_INFINITY })
                .collect();
            let norm = log_sum_exp(&logw);
            MixturePrior::gamma(
                components
                    .iter()
                    .zip(&logw)
                    .map(|(c, &lw)| GammaComponent {
                        shape: c.shape + n as f64,
                        rate: c.rate + e,
                        weight: (lw - norm).exp(),
                    })
                    .collect(),
            )
        }
        MixturePrior::DiscreteGrid { support, masses } => {
            let logw: Vec<f64> = support
                .iter()
                .zip(masses)
                .map(|(&v, &g)| if g > 0.0 { g.ln() + poisson_ln_pmf(n, v * e) } else { f64::NEG_INFINITY })
                .collect();
            let norm = log_sum_exp(&logw);
            MixturePrior::discrete(support.clone(), logw.iter().map(|&lw| (lw - norm).exp()).collect())
        }
    }
}

fn active(components: &[GammaComponent]) -> impl Iterator<Item = &GammaComponent> {
    components.iter().filter(|c| c.weight > 0.0)
}

fn gamma_cdf(cs: &[GammaComponent], x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    active(cs).map(|c| c.weight * gamma_lr(c.shape, c.rate * x)).sum()
}

fn gamma_sf(cs: &[GammaComponent], x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    active(cs).map(|c| c.weight * gamma_ur(c.shape, c.rate * x)).sum()
}

fn gamma_pdf(cs: &[GammaComponent], x: f64) -> f64 {
    active(cs)
        .map(|c| c.weight * (c.shape * c.rate.ln() + (c.shape - 1.0) * x.ln() - c.rate * x - ln_gamma(c.shape)).exp())
        .sum()
}

/// Quantile of a gamma mixture: safeguarded Newton inside a bisection
/// bracket, to relative precision 1e-10 in `λ`.
fn gamma_quantile(cs: &[GammaComponent], q: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = active(cs)
        .map(|c| c.mean() + 10.0 * c.shape.sqrt() / c.rate)
        .fold(0.0, f64::max)
        .max(1e-300);
    while gamma_cdf(cs, hi) < q {
        lo = hi;
        hi *= 2.0;
    }
    // Start at the mixture mean, clipped into the bracket.
    let mut x = active(cs).map(|c| c.weight * c.mean()).sum::<f64>().clamp(lo, hi);
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = gamma_cdf(cs, x) - q;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
        let d = gamma_pdf(cs, x);
        let newton = x - f / d;
        let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 1e-12 * x {
            return next;
        }
        x = next;
    }
    0.5 * (lo + hi)
}

fn discrete_quantile(support: &[f64], masses: &[f64], q: f64) -> f64 {
    let mut acc = 0.0;
    for (&v, &g) in support.iter().zip(masses) {
        acc += g;
        if acc >= q - 1e-12 {
            return v;
        }
    }
    *support.last().expect("non-empty support")
}

/// Summary of `prior` updated by one cell.
pub fn posterior_cell(prior: &MixturePrior, n: u64, e: f64, epsilon: f64) -> PosteriorSummary {
    let post = update(prior, n, e);
    let threshold = 1.0 + epsilon;
    let (median, q05, q95, prob_signal) = match &post {
        MixturePrior::GammaMixture { components } => (
            gamma_quantile(components, 0.5),
            gamma_quantile(components, 0.05),
            gamma_quantile(components, 0.95),
            gamma_sf(components, threshold),
        ),
        MixturePrior::DiscreteGrid { support, masses } => (
            discrete_quantile(support, masses, 0.5),
            discrete_quantile(support, masses, 0.05),
            discrete_quantile(support, masses, 0.95),
            support.iter().zip(masses).filter(|(&v, _)| v > threshold).map(|(_, &g)| g).sum(),
        ),
    };
    PosteriorSummary {
        mean: post.mean(),
        posterior: post,
        median,
        q05,
        q95,
        prob_signal: prob_signal.clamp(0.0, 1.0),
        epsilon,
        prior_only: e <= 0.0,
    }
}
