//! Bayesian confidence propagation neural network (BCPNN) information
//! components.
//!
//! Cell, row and column probabilities get Beta/Uniform priors; the prior
//! parameter `β_ij` of the cell probability is chosen so that its prior mean
//! `1 / (1 + β_ij)` equals the product of the posterior means of the row and
//! column probabilities, `(N_i• + 1)/(N_•• + 2)` and `(N_•j + 1)/(N_•• + 2)`.
//! The posterior of `IC_ij = log2(p_ij / (p_i• p_•j))` is summarised by the
//! usual normal approximation.

use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::fmt_f64;
use crate::table::ContingencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcResult {
    /// Posterior mean of the information component, in bits.
    pub ic_mean: f64,
    pub ic_variance: f64,
    /// Lower end of the approximate 95% interval, `mean - 1.96 sd`.
    pub ic025: f64,
    pub beta_hat: f64,
}

/// Prior parameter `β_ij` for cell `(i, j)`.
pub fn estimate_beta(table: &ContingencyTable, i: usize, j: usize) -> Result<f64> {
    check_index(table, i, j)?;
    Ok(beta_from_counts(
        table.row_total(i) as f64,
        table.col_total(j) as f64,
        table.total() as f64,
    ))
}

fn check_index(table: &ContingencyTable, i: usize, j: usize) -> Result<()> {
    if i >= table.n_rows() || j >= table.n_cols() {
        return Err(Error::IndexOutOfRange(format!("cell ({i}, {j})")));
    }
    Ok(())
}

fn beta_from_counts(ni: f64, nj: f64, n: f64) -> f64 {
    (n + 2.0).powi(2) / ((ni + 1.0) * (nj + 1.0)) - 1.0
}

/// Information component of a single cell from its counts.
pub fn ic_from_counts(nij: f64, ni: f64, nj: f64, n: f64) -> IcResult {
    let beta = beta_from_counts(ni, nj, n);
    let ic_mean = ((nij + 1.0) * (n + 2.0).powi(2) / ((n + beta) * (ni + 1.0) * (nj + 1.0))).log2();
    let ic_variance = ((n - nij + beta - 1.0) / ((nij + 1.0) * (1.0 + n + beta))
        + (n - ni + 1.0) / ((ni + 1.0) * (n + 3.0))
        + (n - nj + 1.0) / ((nj + 1.0) * (n + 3.0)))
        / (LN_2 * LN_2);
    IcResult {
        ic_mean,
        ic_variance,
        ic025: ic_mean - 1.96 * ic_variance.max(0.0).sqrt(),
        beta_hat: beta,
    }
}

/// Information components for every cell. Requires `N_•• > 0`.
pub fn ic(table: &ContingencyTable) -> Result<Grid<IcResult>> {
    if table.total() == 0 {
        return Err(Error::DegenerateTable("grand total is zero".into()));
    }
    let n = table.total() as f64;
    Ok(Grid::from_fn(table.n_rows(), table.n_cols(), |i, j| {
        ic_from_counts(
            table.count(i, j) as f64,
            table.row_total(i) as f64,
            table.col_total(j) as f64,
            n,
        )
    }))
}

/// Flag cells whose `ic025` exceeds `threshold` (conventionally 0).
pub fn bcpnn_signals(results: &Grid<IcResult>, threshold: f64) -> Grid<bool> {
    results.map(|r| r.ic025 > threshold)
}

/// Write `ae,drug,ic_mean,ic_var,ic025,flag` rows.
pub fn write_csv<W: Write>(table: &ContingencyTable, results: &Grid<IcResult>, flags: &Grid<bool>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ae", "drug", "ic_mean", "ic_var", "ic025", "flag"])?;
    for (i, j, r) in results.indexed() {
        w.write_record([
            table.ae_labels()[i].as_str(),
            table.drug_labels()[j].as_str(),
            &fmt_f64(r.ic_mean),
            &fmt_f64(r.ic_variance),
            &fmt_f64(r.ic025),
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
    fn beta_smallest_case() {
        // N = 2, N_i = N_j = 1
        assert_eq!(beta_from_counts(1.0, 1.0, 2.0), 3.0);
        let t = table(vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(estimate_beta(&t, 1, 0).unwrap(), 3.0);
    }

    #[test]
    fn all_ones_cell() {
        let t = table(vec![vec![1, 1], vec![1, 1]]);
        let r = ic(&t).unwrap()[(0, 0)];
        // (1+1)(4+2)^2 / ((4+3)(2+1)(2+1))
        let expected = (2.0f64 * 36.0 / (7.0 * 9.0)).log2();
        assert!((r.ic_mean - expected).abs() < 1e-12);
        assert!(r.ic_variance > 0.0);
    }

    #[test]
    fn empty_table_rejected() {
        let t = table(vec![vec![0, 0]]);
        assert!(ic(&t).is_err());
    }

    #[test]
    fn signal_rule() {
        let r = IcResult {
            ic_mean: 2.0,
            ic_variance: 0.01,
            ic025: 2.0 - 1.96 * 0.1,
            beta_hat: 1.0,
        };
        assert!((r.ic025 - 1.804).abs() < 1e-12);
        let g = Grid::from_vec(1, 2, vec![r, IcResult { ic_mean: 0.0, ic025: -0.1, ..r }]);
        assert_eq!(bcpnn_signals(&g, 0.0).as_slice(), &[true, false]);
    }
}
