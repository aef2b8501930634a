//! Proportional reporting ratio and reporting odds ratio.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grid;
use crate::io::fmt_f64;
use crate::table::{collapse_2x2, Collapsed2x2, ContingencyTable};

const Z95: f64 = 1.96;

/// Point estimate and approximate 95% interval for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisproportionalityResult {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// False when a zero cell or zero denominator makes the estimate
    /// meaningless; the numeric fields are NaN in that case.
    pub defined: bool,
}

impl DisproportionalityResult {
    const UNDEFINED: Self = Self {
        estimate: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
        defined: false,
    };

    fn from_log(log_est: f64, var: f64) -> Self {
        let half = Z95 * var.max(0.0).sqrt();
        Self {
            estimate: log_est.exp(),
            ci_low: (log_est - half).exp(),
            ci_high: (log_est + half).exp(),
            defined: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Prr,
    Ror,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Self::Prr => "prr",
            Self::Ror => "ror",
        }
    }
}

fn prr_cell(c: &Collapsed2x2) -> DisproportionalityResult {
    let (a, b, cc, d) = (c.n11 as f64, c.n12 as f64, c.n21 as f64, c.n22 as f64);
    let row = a + b;
    let rest = cc + d;
    if c.n11 == 0 || c.n21 == 0 || row == 0.0 || rest == 0.0 {
        return DisproportionalityResult::UNDEFINED;
    }
    let log_est = (a / row).ln() - (cc / rest).ln();
    let var = 1.0 / a - 1.0 / row + 1.0 / cc - 1.0 / rest;
    DisproportionalityResult::from_log(log_est, var)
}

fn ror_cell(c: &Collapsed2x2) -> DisproportionalityResult {
    if c.n11 == 0 || c.n12 == 0 || c.n21 == 0 || c.n22 == 0 {
        return DisproportionalityResult::UNDEFINED;
    }
    let (a, b, cc, d) = (c.n11 as f64, c.n12 as f64, c.n21 as f64, c.n22 as f64);
    let log_est = (a / b).ln() - (cc / d).ln();
    let var = 1.0 / a + 1.0 / b + 1.0 / cc + 1.0 / d;
    DisproportionalityResult::from_log(log_est, var)
}

fn per_cell(table: &ContingencyTable, f: fn(&Collapsed2x2) -> DisproportionalityResult) -> Grid<DisproportionalityResult> {
    Grid::from_fn(table.n_rows(), table.n_cols(), |i, j| {
        f(&collapse_2x2(table, i, j).expect("indices in range"))
    })
}

/// PRR for every cell.
pub fn prr(table: &ContingencyTable) -> Grid<DisproportionalityResult> {
    per_cell(table, prr_cell)
}

/// ROR for every cell.
///
/// The interval uses the usual Woolf variance, the sum of reciprocal cell
/// counts of the collapsed 2 × 2 table.
pub fn ror(table: &ContingencyTable) -> Grid<DisproportionalityResult> {
    per_cell(table, ror_cell)
}

pub fn compute(table: &ContingencyTable, measure: Measure) -> Grid<DisproportionalityResult> {
    match measure {
        Measure::Prr => prr(table),
        Measure::Ror => ror(table),
    }
}

/// Signal rule applied to a disproportionality estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdRule {
    EstimateAbove(f64),
    CiLowAbove(f64),
}

impl ThresholdRule {
    pub fn applies(&self, r: &DisproportionalityResult) -> bool {
        r.defined
            && match *self {
                Self::EstimateAbove(t) => r.estimate > t,
                Self::CiLowAbove(t) => r.ci_low > t,
            }
    }
}

impl Default for ThresholdRule {
    fn default() -> Self {
        Self::CiLowAbove(1.0)
    }
}

pub fn flag_signals(results: &Grid<DisproportionalityResult>, rule: ThresholdRule) -> Grid<bool> {
    results.map(|r| rule.applies(r))
}

/// Write `ae,drug,method,estimate,ci_low,ci_high,defined,flag` rows.
pub fn write_csv<W: Write>(
    table: &ContingencyTable,
    measure: Measure,
    results: &Grid<DisproportionalityResult>,
    flags: &Grid<bool>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ae", "drug", "method", "estimate", "ci_low", "ci_high", "defined", "flag"])?;
    for (i, j, r) in results.indexed() {
        w.write_record([
            table.ae_labels()[i].as_str(),
            table.drug_labels()[j].as_str(),
            measure.name(),
            &fmt_f64(r.estimate),
            &fmt_f64(r.ci_low),
            &fmt_f64(r.ci_high),
            if r.defined { "true" } else { "false" },
            if *flags.get(i, j) { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<Vec<u64>>) -> ContingencyTable {
        let ae = (0..rows.len()).map(|i| format!("AE{i}")).collect();
        let drugs = (0..rows[0].len()).map(|j| format!("D{j}")).collect();
        ContingencyTable::new(ae, drugs, rows).unwrap()
    }

    #[test]
    fn independence_gives_one() {
        let t = table(vec![vec![10, 20], vec![90, 180]]);
        assert!((prr(&t)[(0, 0)].estimate - 1.0).abs() < 1e-12);
        assert!((ror(&t)[(0, 0)].estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arithmetic_examples() {
        let t = table(vec![vec![20, 20], vec![90, 180]]);
        // (20/40) / (90/270) and (20/20) / (90/180)
        assert!((prr(&t)[(0, 0)].estimate - 1.5).abs() < 1e-12);
        let r = ror(&t)[(0, 0)];
        assert!((r.estimate - 2.0).abs() < 1e-12);
        let half = 1.96 * (1.0f64 / 20.0 + 1.0 / 20.0 + 1.0 / 90.0 + 1.0 / 180.0).sqrt();
        assert!((r.ci_low - (2.0f64.ln() - half).exp()).abs() < 1e-12);
        assert!(r.ci_low > 0.0 && r.ci_low <= r.estimate && r.estimate <= r.ci_high);
    }

    #[test]
    fn zero_cell_is_undefined() {
        let t = table(vec![vec![0, 20], vec![90, 180]]);
        assert!(!prr(&t)[(0, 0)].defined);
        assert!(!ror(&t)[(0, 0)].defined);
        let f = flag_signals(&prr(&t), ThresholdRule::EstimateAbove(0.0));
        assert!(!f[(0, 0)]);
    }

    #[test]
    fn rules() {
        let r = DisproportionalityResult {
            estimate: 1.5,
            ci_low: 1.2,
            ci_high: 2.0,
            defined: true,
        };
        assert!(ThresholdRule::CiLowAbove(1.0).applies(&r));
        assert!(!ThresholdRule::EstimateAbove(2.0).applies(&r));
    }
}
