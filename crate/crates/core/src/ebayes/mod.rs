//! Empirical Bayes shrinkage of relative reporting ratios.
//!
//! Each cell count is modelled as `N_ij ~ Poisson(λ_ij E_ij)` with `λ_ij`
//! drawn from a prior `g` that is estimated from the whole table by
//! maximising the marginal likelihood. Four prior families are available:
//!
//! | fitter | prior |
//! |---|---|
//! | [`fit_gps`] | two-component gamma mixture |
//! | [`fit_general_gamma`] | sparse overfitted gamma mixture (Dirichlet-penalised weights) |
//! | [`fit_km`] | discrete prior on a fixed grid, weights free (NPMLE) |
//! | [`fit_efron`] | discrete prior on a grid, log-masses in a spline space |
//!
//! Posterior summaries per cell come from [`posterior_cell`] and the signal
//! rules from [`eb_signal_table`]. Cells with `E = 0` carry no information
//! about `λ` and are left out of every likelihood.
//!
//! ```
//! use pvkit::ebayes::{posterior_cell, GammaComponent, MixturePrior};
//!
//! let prior = MixturePrior::gamma(vec![GammaComponent { shape: 0.5, rate: 0.5, weight: 1.0 }]);
//! let post = posterior_cell(&prior, 1, 0.01, 0.001);
//! // One report where 0.01 were expected: the raw ratio 100 shrinks to 1.5 / 0.51.
//! assert!((post.mean - 1.5 / 0.51).abs() < 1e-12);
//! assert!(post.median < 100.0);
//! ```

mod efron;
mod general_gamma;
mod gps;
mod grid;
mod km;
mod nb;
mod posterior;
mod signal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{BaselineMatrix, ContingencyTable};

pub use efron::{efron_aic, fit_efron, fit_efron_cells, select_efron, EfronFit, EfronOptions, EfronPrior, EfronSelection, C0_GRID, P_GRID};
pub use general_gamma::{fit_general_gamma, fit_general_gamma_cells, GeneralGammaOptions};
pub use gps::{fit_gps, fit_gps_cells, fit_single_gamma_cells};
pub use grid::{select_grid, select_grid_cells};
pub use km::{fit_km, fit_km_cells};
pub use nb::{nb_ln_marginal, nb_marginal};
pub use posterior::{posterior_cell, PosteriorSummary, DEFAULT_EPSILON};
pub use signal::{eb_signal_table, write_csv, EbRule, SignalTable};

/// One gamma component with density `β^α λ^{α-1} e^{-βλ} / Γ(α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaComponent {
    pub shape: f64,
    pub rate: f64,
    pub weight: f64,
}

impl GammaComponent {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// A fitted prior for `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MixturePrior {
    GammaMixture { components: Vec<GammaComponent> },
    DiscreteGrid { support: Vec<f64>, masses: Vec<f64> },
}

impl MixturePrior {
    pub fn gamma(components: Vec<GammaComponent>) -> Self {
        Self::GammaMixture { components }
    }

    pub fn discrete(support: Vec<f64>, masses: Vec<f64>) -> Self {
        Self::DiscreteGrid { support, masses }
    }

    /// Check positivity, ordering and normalisation.
    pub fn validate(&self) -> Result<()> {
        let (weights, what): (Vec<f64>, _) = match self {
            Self::GammaMixture { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidArgument("gamma mixture has no components".into()));
                }
                if components.iter().any(|c| !(c.shape > 0.0 && c.rate > 0.0)) {
                    return Err(Error::InvalidArgument("gamma shape and rate must be positive".into()));
                }
                (components.iter().map(|c| c.weight).collect(), "weights")
            }
            Self::DiscreteGrid { support, masses } => {
                if support.is_empty() || support.len() != masses.len() {
                    return Err(Error::InvalidArgument("support and masses must be non-empty and equally long".into()));
                }
                if support[0] <= 0.0 || support.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument("support must be positive and strictly increasing".into()));
                }
                (masses.clone(), "masses")
            }
        };
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("{what} must be nonnegative and sum to 1")));
        }
        Ok(())
    }

    /// Prior mean of `λ`.
    pub fn mean(&self) -> f64 {
        match self {
            Self::GammaMixture { components } => components.iter().map(|c| c.weight * c.mean()).sum(),
            Self::DiscreteGrid { support, masses } => support.iter().zip(masses).map(|(v, g)| v * g).sum(),
        }
    }

    /// Marginal log-likelihood `Σ log f(N | E)` over cells with `E > 0`.
    pub fn log_likelihood(&self, cells: &[CellObs]) -> f64 {
        cells
            .iter()
            .filter(|c| c.e > 0.0)
            .map(|c| posterior::ln_marginal(self, c.n, c.e))
            .sum()
    }
}

/// One observed count and its null baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellObs {
    pub n: u64,
    pub e: f64,
}

/// Fitting cells of a table: every cell with `E > 0`.
pub fn cells_from_table(table: &ContingencyTable, baseline: &BaselineMatrix) -> Result<Vec<CellObs>> {
    if baseline.n_rows() != table.n_rows() || baseline.n_cols() != table.n_cols() {
        return Err(Error::InvalidArgument("baseline shape does not match table".into()));
    }
    let mut cells = Vec::with_capacity(table.n_rows() * table.n_cols());
    for (i, j, &n) in table.counts().indexed() {
        let e = baseline.get(i, j);
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::InvalidArgument(format!("baseline of cell ({i}, {j}) is {e}")));
        }
        if e == 0.0 {
            if n > 0 {
                return Err(Error::ImpossibleBaseline { ae: i, drug: j, n });
            }
            continue;
        }
        cells.push(CellObs { n, e });
    }
    Ok(cells)
}

/// Diagnostics attached to every fitted prior.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitInfo {
    pub method: String,
    pub iterations: usize,
    pub converged: bool,
    /// Final value of the objective the fitter maximised.
    pub objective: f64,
    /// Unpenalised marginal log-likelihood of the returned prior.
    pub log_likelihood: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Objective after each iteration (or accepted optimiser step).
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// A prior together with how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPrior {
    pub prior: MixturePrior,
    pub fit: FitInfo,
}

impl FittedPrior {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.prior.validate()?;
        Ok(p)
    }
}

/// Cells arranged for repeated likelihood evaluation: distinct counts are
/// shared, so `ln Γ(n + α)` and friends are computed once per distinct `n`.
pub(crate) struct Cells {
    pub n: Vec<f64>,
    pub e: Vec<f64>,
    pub ln_e: Vec<f64>,
    pub ln_n_fact: Vec<f64>,
    /// Distinct counts, ascending.
    pub uniq: Vec<f64>,
    /// Position of each cell's count in `uniq`.
    pub uidx: Vec<usize>,
}

impl Cells {
    pub fn new(cells: &[CellObs]) -> Self {
        let mut uniq: Vec<u64> = cells.iter().map(|c| c.n).collect();
        uniq.sort_unstable();
        uniq.dedup();
        let uidx = cells.iter().map(|c| uniq.binary_search(&c.n).expect("present")).collect();
        Self {
            n: cells.iter().map(|c| c.n as f64).collect(),
            e: cells.iter().map(|c| c.e).collect(),
            ln_e: cells.iter().map(|c| c.e.ln()).collect(),
            ln_n_fact: cells.iter().map(|c| crate::special::ln_factorial(c.n)).collect(),
            uniq: uniq.into_iter().map(|n| n as f64).collect(),
            uidx,
        }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }
}

/// Keep cells with `E > 0` and require at least `min` of them.
pub(crate) fn usable_cells(cells: &[CellObs], min: usize, method: &str) -> Result<Vec<CellObs>> {
    let mut out = Vec::with_capacity(cells.len());
    for c in cells {
        if !(c.e >= 0.0 && c.e.is_finite()) {
            return Err(Error::InvalidArgument(format!("baseline {} is not a finite nonnegative number", c.e)));
        }
        if c.e > 0.0 {
            out.push(*c);
        } else if c.n > 0 {
            return Err(Error::InvalidArgument(format!("count {} with zero baseline", c.n)));
        }
    }
    if out.len() < min {
        return Err(Error::FitFailure(format!("{method} needs at least {min} cells with E > 0, got {}", out.len())));
    }
    Ok(out)
}
