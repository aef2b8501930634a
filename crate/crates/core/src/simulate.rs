//! Synthetic tables with planted signals, and decision scoring.
//!
//! A [`SimScenario`] fixes the row proportions `π_i`, the column totals
//! `N_•j` and the true ratios `λ_ij` (1 unless planted). The baseline is
//! `E_ij = π_i N_•j`. Table `t` of a scenario is a pure function of
//! `(seed, t)`: columns of a conditional null table come from stream
//! `(seed, 0, t, j)` and Poisson cells from stream `(seed, 1, t, i·J + j)`.
//!
//! ```
//! use pvkit::simulate::{gen_poisson_table, score, SimScenario, PlantedSignal};
//!
//! let mut sc = SimScenario::uniform(20, 3, 500, 7);
//! sc.signals.push(PlantedSignal { ae: 2, drug: 1, lambda: 20.0 });
//! let t = gen_poisson_table(&sc, 0)?;
//! assert_eq!(t.n_rows(), 20);
//! let truth = sc.truth();
//! let report = score(&truth, &truth)?;
//! assert_eq!((report.fdr, report.sensitivity), (0.0, 1.0));
//! # Ok::<(), pvkit::Error>(())
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rng;
use crate::table::{BaselineMatrix, ContingencyTable, OTHER_AES, OTHER_DRUGS};

const STREAM_NULL: u64 = 0;
const STREAM_POISSON: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSignal {
    pub ae: usize,
    pub drug: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub rows: usize,
    pub cols: usize,
    /// Relative row sizes; normalised to proportions.
    pub row_marginals: Vec<f64>,
    pub col_totals: Vec<u64>,
    /// Cells whose `λ` differs from 1.
    #[serde(default)]
    pub signals: Vec<PlantedSignal>,
    /// Probability of a structural zero in each cell.
    #[serde(default)]
    pub p0: f64,
    pub seed: u64,
    #[serde(default)]
    pub reference_row: Option<usize>,
    #[serde(default)]
    pub reference_col: Option<usize>,
}

impl SimScenario {
    /// Equal row proportions and equal column totals, no signals.
    pub fn uniform(rows: usize, cols: usize, col_total: u64, seed: u64) -> Self {
        Self {
            rows,
            cols,
            row_marginals: vec![1.0; rows],
            col_totals: vec![col_total; cols],
            signals: Vec::new(),
            p0: 0.0,
            seed,
            reference_row: None,
            reference_col: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Self = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.rows == 0 || self.cols == 0 {
            return bad("scenario needs at least one row and one column".into());
        }
        if self.row_marginals.len() != self.rows || self.col_totals.len() != self.cols {
            return bad("marginal lengths do not match the dimensions".into());
        }
        if self.row_marginals.iter().any(|&r| !(r >= 0.0 && r.is_finite())) || self.row_marginals.iter().sum::<f64>() <= 0.0 {
            return bad("row marginals must be nonnegative with a positive sum".into());
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return bad(format!("p0 = {} outside [0, 1]", self.p0));
        }
        for s in &self.signals {
            if s.ae >= self.rows || s.drug >= self.cols {
                return bad(format!("planted signal at ({}, {}) is outside the table", s.ae, s.drug));
            }
            if !(s.lambda >= 0.0 && s.lambda.is_finite()) {
                return bad(format!("planted λ = {} must be finite and nonnegative", s.lambda));
            }
        }
        if self.reference_row.is_some_and(|i| i >= self.rows) || self.reference_col.is_some_and(|j| j >= self.cols) {
            return bad("reference index out of range".into());
        }
        Ok(())
    }

    pub fn row_proportions(&self) -> Vec<f64> {
        let s: f64 = self.row_marginals.iter().sum();
        self.row_marginals.iter().map(|r| r / s).collect()
    }

    /// `E_ij = π_i N_•j`.
    pub fn baseline(&self) -> BaselineMatrix {
        let p = self.row_proportions();
        BaselineMatrix::from_grid(Grid::from_fn(self.rows, self.cols, |i, j| p[i] * self.col_totals[j] as f64))
    }

    pub fn lambda(&self) -> Grid<f64> {
        let mut g = Grid::filled(self.rows, self.cols, 1.0);
        for s in &self.signals {
            g[(s.ae, s.drug)] = s.lambda;
        }
        g
    }

    /// True signals: `λ > 1`.
    pub fn truth(&self) -> Grid<bool> {
        self.lambda().map(|&l| l > 1.0)
    }

    fn labels(&self) -> (Vec<String>, Vec<String>) {
        let ae = (0..self.rows)
            .map(|i| if Some(i) == self.reference_row { OTHER_AES.to_string() } else { format!("AE{}", i + 1) })
            .collect();
        let drugs = (0..self.cols)
            .map(|j| if Some(j) == self.reference_col { OTHER_DRUGS.to_string() } else { format!("D{}", j + 1) })
            .collect();
        (ae, drugs)
    }

    fn to_table(&self, counts: Grid<u64>) -> Result<ContingencyTable> {
        let (ae, drugs) = self.labels();
        ContingencyTable::from_grid(ae, drugs, counts)?
            .with_reference_row(self.reference_row)?
            .with_reference_col(self.reference_col)
    }
}

/// Null table: every column drawn from a multinomial with the scenario's
/// row proportions and its column total. Planted signals are ignored.
pub fn gen_null_conditional(scenario: &SimScenario, table_index: u64) -> Result<ContingencyTable> {
    scenario.validate()?;
    let p = scenario.row_proportions();
    let mut counts = Grid::filled(scenario.rows, scenario.cols, 0u64);
    let mut col = vec![0u64; scenario.rows];
    for j in 0..scenario.cols {
        let mut g = rng::stream(scenario.seed, &[STREAM_NULL, table_index, j as u64]);
        rng::multinomial(scenario.col_totals[j], &p, &mut g, &mut col);
        for (i, &x) in col.iter().enumerate() {
            counts[(i, j)] = x;
        }
    }
    scenario.to_table(counts)
}

/// Table with independent cells `N_ij ~ ZIP(λ_ij E_ij, p0)`.
pub fn gen_poisson_table(scenario: &SimScenario, table_index: u64) -> Result<ContingencyTable> {
    scenario.validate()?;
    let e = scenario.baseline();
    let lambda = scenario.lambda();
    let cols = scenario.cols;
    let counts = Grid::from_fn(scenario.rows, cols, |i, j| {
        let mut g = rng::stream(scenario.seed, &[STREAM_POISSON, table_index, (i * cols + j) as u64]);
        rng::zip(lambda[(i, j)] * e.get(i, j), scenario.p0, &mut g)
    });
    scenario.to_table(counts)
}

/// Confusion counts and the rates derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub fdr: f64,
    pub sensitivity: f64,
    pub type_i_error: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl MetricReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let ratio = |a: u64, b: u64| a as f64 / b.max(1) as f64;
        Self {
            fdr: ratio(fp, tp + fp),
            sensitivity: ratio(tp, tp + fn_),
            type_i_error: ratio(fp, fp + tn),
            tp,
            fp,
            fn_,
            tn,
        }
    }

    /// Pool the confusion counts of two reports.
    pub fn merge(&self, other: &Self) -> Self {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_, self.tn + other.tn)
    }
}

pub fn score(decisions: &Grid<bool>, truth: &Grid<bool>) -> Result<MetricReport> {
    score_masked(decisions, truth, None)
}

/// [`score`] restricted to cells where `mask` is true.
pub fn score_masked(decisions: &Grid<bool>, truth: &Grid<bool>, mask: Option<&Grid<bool>>) -> Result<MetricReport> {
    if decisions.shape() != truth.shape() || mask.is_some_and(|m| m.shape() != truth.shape()) {
        return Err(Error::InvalidArgument("decision, truth and mask shapes differ".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (k, (&d, &t)) in decisions.as_slice().iter().zip(truth.as_slice()).enumerate() {
        if mask.is_some_and(|m| !m.as_slice()[k]) {
            continue;
        }
        match (d, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(MetricReport::from_counts(tp, fp, fn_, tn))
}
