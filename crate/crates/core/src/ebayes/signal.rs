//! Per-cell posterior summaries and signal decisions.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{posterior_cell, MixturePrior, PosteriorSummary};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::fmt_f64;
use crate::table::{BaselineMatrix, ContingencyTable};

/// Decision rule applied to a posterior summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EbRule {
    /// `P(λ > 1 + ε | N)` above the cutoff (conventionally 0.95).
    ProbAbove(f64),
    /// Posterior 5% quantile (EB05) above the threshold (conventionally 2).
    Eb05Above(f64),
}

impl EbRule {
    pub fn applies(&self, s: &PosteriorSummary) -> bool {
        !s.prior_only
            && match *self {
                Self::ProbAbove(c) => s.prob_signal > c,
                Self::Eb05Above(t) => s.q05 > t,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTable {
    pub summaries: Grid<PosteriorSummary>,
    pub decisions: Grid<bool>,
    pub rule: EbRule,
}

/// Posterior summary and decision for every cell of `table`.
pub fn eb_signal_table(
    prior: &MixturePrior,
    table: &ContingencyTable,
    baseline: &BaselineMatrix,
    rule: EbRule,
    epsilon: f64,
) -> Result<SignalTable> {
    prior.validate()?;
    if baseline.n_rows() != table.n_rows() || baseline.n_cols() != table.n_cols() {
        return Err(Error::InvalidArgument("baseline shape does not match table".into()));
    }
    let (rows, cols) = (table.n_rows(), table.n_cols());
    if let Some((i, j, &n)) = table.counts().indexed().find(|&(i, j, &n)| n > 0 && baseline.get(i, j) <= 0.0) {
        return Err(Error::ImpossibleBaseline { ae: i, drug: j, n });
    }
    let summaries: Vec<PosteriorSummary> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / cols, idx % cols);
            posterior_cell(prior, table.count(i, j), baseline.get(i, j), epsilon)
        })
        .collect();
    let summaries = Grid::from_vec(rows, cols, summaries);
    let decisions = summaries.map(|s| rule.applies(s));
    Ok(SignalTable { summaries, decisions, rule })
}

/// Write `ae,drug,N,E,median,q05,q95,prob_signal,decision,method` rows.
pub fn write_csv<W: Write>(
    table: &ContingencyTable,
    baseline: &BaselineMatrix,
    signals: &SignalTable,
    method: &str,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ae", "drug", "N", "E", "median", "q05", "q95", "prob_signal", "decision", "method"])?;
    for (i, j, s) in signals.summaries.indexed() {
        w.write_record([
            table.ae_labels()[i].as_str(),
            table.drug_labels()[j].as_str(),
            &table.count(i, j).to_string(),
            &fmt_f64(baseline.get(i, j)),
            &fmt_f64(s.median),
            &fmt_f64(s.q05),
            &fmt_f64(s.q95),
            &fmt_f64(s.prob_signal),
            if signals.decisions[(i, j)] { "true" } else { "false" },
            method,
        ])?;
    }
    w.flush()?;
    Ok(())
}
