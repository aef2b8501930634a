//! Likelihood ratio tests with Monte Carlo null calibration.
//!
//! Two families share the same calibration machinery:
//!
//! * the original LRT compares the reporting rate of drug `j` among reports
//!   of AE `i` with its rate among all other reports; the null distribution
//!   of the per-drug maximum is simulated by redrawing the drug column from a
//!   multinomial with the observed row proportions;
//! * the pseudo-LRT works with the relative reporting ratio `λ_ij` in
//!   `N_ij ~ Poisson(λ_ij E_ij)` (optionally zero-inflated) and calibrates by
//!   a parametric bootstrap from `λ = 1` with `E` held fixed.
//!
//! Replicate `r` draws drug column `j` from [`rng::stream`]`(seed, [r, j])`,
//! so results do not depend on the thread count, and a single-drug extended
//! test sees exactly the draws of the per-drug test.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::fmt_f64;
use crate::rng;
use crate::special::poisson_ln_pmf;
use crate::table::{BaselineMatrix, ContingencyTable};

/// Maximum likelihood rates behind one cell's log-likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrtRates {
    /// Rate of drug `j` among reports of AE `i`.
    pub p: f64,
    /// Rate of drug `j` among reports of all other AEs.
    pub q: f64,
    /// Common rate under the null, `N_•j / N_••`.
    pub p0: f64,
}

pub fn lrt_rates(table: &ContingencyTable, i: usize, j: usize) -> Result<LrtRates> {
    check_cell(table, i, j)?;
    let (nij, ni, nj, n) = cell_counts(table, i, j);
    let rest = n - ni;
    Ok(LrtRates {
        p: nij / ni,
        q: if rest > 0.0 { (nj - nij) / rest } else { 0.0 },
        p0: nj / n,
    })
}

fn check_cell(table: &ContingencyTable, i: usize, j: usize) -> Result<()> {
    if i >= table.n_rows() || j >= table.n_cols() {
        return Err(Error::IndexOutOfRange(format!("cell ({i}, {j})")));
    }
    if table.row_total(i) == 0 {
        return Err(Error::DegenerateMarginals {
            ae: i,
            drug: j,
            reason: "AE row total is zero".into(),
        });
    }
    Ok(())
}

fn cell_counts(table: &ContingencyTable, i: usize, j: usize) -> (f64, f64, f64, f64) {
    (
        table.count(i, j) as f64,
        table.row_total(i) as f64,
        table.col_total(j) as f64,
        table.total() as f64,
    )
}

/// Log-likelihood ratio from counts. Written relative to `p0` so that an
/// exactly independent cell gives exactly zero. When the row holds every
/// report the `q` term has coefficient zero and drops out.
fn log_lr_counts(nij: f64, ni: f64, nj: f64, n: f64, one_sided: bool) -> f64 {
    if ni <= 0.0 || nj <= 0.0 {
        return 0.0;
    }
    let p0 = nj / n;
    let p = nij / ni;
    let rest_n = n - ni;
    let rest_j = nj - nij;
    let q = if rest_n > 0.0 { rest_j / rest_n } else { 0.0 };
    if one_sided && p <= q {
        return 0.0;
    }
    let a = if nij > 0.0 { nij * (p / p0).ln() } else { 0.0 };
    let b = if rest_j > 0.0 { rest_j * (q / p0).ln() } else { 0.0 };
    (a + b).max(0.0)
}

/// Log-likelihood ratio of cell `(i, j)`; `one_sided` zeroes it unless the
/// AE's rate exceeds the rate among other AEs.
pub fn log_lr_cell(table: &ContingencyTable, i: usize, j: usize, one_sided: bool) -> Result<f64> {
    check_cell(table, i, j)?;
    let (nij, ni, nj, n) = cell_counts(table, i, j);
    Ok(log_lr_counts(nij, ni, nj, n, one_sided))
}

/// Maximum over AEs of the log LR for drug `j`, with the first maximising
/// AE. Rows without reports contribute zero.
pub fn mlr_drug(table: &ContingencyTable, j: usize, one_sided: bool) -> Result<(f64, usize)> {
    if j >= table.n_cols() {
        return Err(Error::IndexOutOfRange(format!("drug column {j}")));
    }
    let stats = column_log_lr(table, j, table.counts().as_slice(), one_sided);
    Ok(argmax(&stats))
}

/// Per-row statistics for drug `j` with the column counts replaced by
/// `col(i)`; marginals come from the observed table.
fn column_stats_with(table: &ContingencyTable, j: usize, col: impl Fn(usize) -> f64, one_sided: bool) -> Vec<f64> {
    let nj = table.col_total(j) as f64;
    let n = table.total() as f64;
    (0..table.n_rows())
        .map(|i| log_lr_counts(col(i), table.row_total(i) as f64, nj, n, one_sided))
        .collect()
}

fn column_log_lr(table: &ContingencyTable, j: usize, counts: &[u64], one_sided: bool) -> Vec<f64> {
    let cols = table.n_cols();
    column_stats_with(table, j, |i| counts[i * cols + j] as f64, one_sided)
}

fn argmax(xs: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &x) in xs.iter().enumerate() {
        if x > best.0 {
            best = (x, i);
        }
    }
    if xs.is_empty() {
        (0.0, 0)
    } else {
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Observed maximum log-likelihood ratio.
    pub statistic: f64,
    pub p_value: f64,
    pub decision: bool,
    pub replications: usize,
    pub seed: u64,
    pub argmax_ae: Option<usize>,
}

/// Monte Carlo settings shared by the tests in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub reps: usize,
    pub seed: u64,
    pub one_sided: bool,
    /// Significance level for `decision`.
    pub alpha: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            reps: 999,
            seed: 42,
            one_sided: false,
            alpha: 0.05,
        }
    }
}

impl McOptions {
    fn check(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// `(1 + #{x ≥ observed}) / (R + 1)` against replicate maxima sorted
/// ascending.
fn mc_pvalue(sorted: &[f64], observed: f64) -> f64 {
    let below = sorted.partition_point(|&x| x < observed);
    (1 + sorted.len() - below) as f64 / (sorted.len() + 1) as f64
}

/// Per-drug test results together with cell-level statistics and p-values.
///
/// A cell's p-value compares its statistic with the null distribution of
/// its drug's maximum, which keeps the family-wise error per drug at the
/// nominal level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtAnalysis {
    pub drugs: Vec<usize>,
    pub per_drug: Vec<TestResult>,
    /// Observed cell statistics; NaN in untested columns.
    pub cell_statistics: Grid<f64>,
    pub cell_pvalues: Grid<Option<f64>>,
    /// Present for the zero-inflated pseudo-LRT.
    pub zip_fit: Option<ZipNullFit>,
}

/// Combine observed statistics with replicate maxima (`maxima[r][d]`).
fn assemble(
    table: &ContingencyTable,
    drugs: &[usize],
    observed: Vec<Vec<f64>>,
    maxima: Vec<Vec<f64>>,
    opts: &McOptions,
    active: &[bool],
) -> LrtAnalysis {
    let mut cell_statistics = Grid::filled(table.n_rows(), table.n_cols(), f64::NAN);
    let mut cell_pvalues = Grid::filled(table.n_rows(), table.n_cols(), None);
    let mut per_drug = Vec::with_capacity(drugs.len());
    for (d, &j) in drugs.iter().enumerate() {
        let stats = &observed[d];
        for (i, &s) in stats.iter().enumerate() {
            cell_statistics[(i, j)] = s;
        }
        if !active[d] {
            for i in 0..table.n_rows() {
                cell_pvalues[(i, j)] = Some(1.0);
            }
            per_drug.push(TestResult {
                statistic: 0.0,
                p_value: 1.0,
                decision: false,
                replications: opts.reps,
                seed: opts.seed,
                argmax_ae: None,
            });
            continue;
        }
        let mut null: Vec<f64> = maxima.iter().map(|m| m[d]).collect();
        null.sort_by(f64::total_cmp);
        for (i, &s) in stats.iter().enumerate() {
            cell_pvalues[(i, j)] = Some(mc_pvalue(&null, s));
        }
        let (statistic, arg) = argmax(stats);
        let p_value = mc_pvalue(&null, statistic);
        per_drug.push(TestResult {
            statistic,
            p_value,
            decision: p_value < opts.alpha,
            replications: opts.reps,
            seed: opts.seed,
            argmax_ae: Some(arg),
        });
    }
    LrtAnalysis {
        drugs: drugs.to_vec(),
        per_drug,
        cell_statistics,
        cell_pvalues,
        zip_fit: None,
    }
}

fn check_drugs(table: &ContingencyTable, drugs: &[usize]) -> Result<()> {
    if drugs.is_empty() {
        return Err(Error::InvalidArgument("no drug columns selected".into()));
    }
    if let Some(&j) = drugs.iter().find(|&&j| j >= table.n_cols()) {
        return Err(Error::IndexOutOfRange(format!("drug column {j}")));
    }
    Ok(())
}

/// Maximum statistic of drug `j`'s column redrawn under the multinomial
/// null in replicate `r`.
fn multinomial_replicate_max(table: &ContingencyTable, j: usize, r: usize, seed: u64, one_sided: bool, probs: &[f64], buf: &mut [u64]) -> f64 {
    let mut g = rng::stream(seed, &[r as u64, j as u64]);
    rng::multinomial(table.col_total(j), probs, &mut g, buf);
    let stats = column_stats_with(table, j, |i| buf[i] as f64, one_sided);
    argmax(&stats).0
}

fn row_probs(table: &ContingencyTable) -> Vec<f64> {
    let n = table.total() as f64;
    table.row_totals().iter().map(|&x| x as f64 / n).collect()
}

/// Original LRT for each drug in `drugs`, with cell-level p-values.
pub fn lrt_analysis(table: &ContingencyTable, drugs: &[usize], opts: &McOptions) -> Result<LrtAnalysis> {
    opts.check()?;
    check_drugs(table, drugs)?;
    let observed: Vec<Vec<f64>> = drugs
        .iter()
        .map(|&j| column_log_lr(table, j, table.counts().as_slice(), opts.one_sided))
        .collect();
    let active: Vec<bool> = drugs.iter().map(|&j| table.col_total(j) > 0).collect();
    let probs = row_probs(table);
    let maxima: Vec<Vec<f64>> = (0..opts.reps)
        .into_par_iter()
        .map_init(
            || vec![0u64; table.n_rows()],
            |buf, r| {
                drugs
                    .iter()
                    .zip(&active)
                    .map(|(&j, &a)| if a { multinomial_replicate_max(table, j, r, opts.seed, opts.one_sided, &probs, buf) } else { 0.0 })
                    .collect()
            },
        )
        .collect();
    Ok(assemble(table, drugs, observed, maxima, opts, &active))
}

/// Monte Carlo p-value of the maximum LR for drug `j`.
pub fn mc_null_pvalue(table: &ContingencyTable, j: usize, opts: &McOptions) -> Result<TestResult> {
    Ok(lrt_analysis(table, &[j], opts)?.per_drug.remove(0))
}

/// Extended LRT of the global null that none of `drugs` has a signal. The
/// statistic is the maximum cell statistic over all selected columns; each
/// column is redrawn independently under the null.
pub fn ext_mlr(table: &ContingencyTable, drugs: &[usize], opts: &McOptions) -> Result<TestResult> {
    opts.check()?;
    check_drugs(table, drugs)?;
    let active: Vec<usize> = drugs.iter().copied().filter(|&j| table.col_total(j) > 0).collect();
    if active.is_empty() {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            decision: false,
            replications: opts.reps,
            seed: opts.seed,
            argmax_ae: None,
        });
    }
    let mut statistic = f64::NEG_INFINITY;
    let mut argmax_ae = None;
    for &j in &active {
        let (s, i) = mlr_drug(table, j, opts.one_sided)?;
        if s > statistic {
            statistic = s;
            argmax_ae = Some(i);
        }
    }
    let probs = row_probs(table);
    let mut null: Vec<f64> = (0..opts.reps)
        .into_par_iter()
        .map_init(
            || vec![0u64; table.n_rows()],
            |buf, r| {
                active
                    .iter()
                    .map(|&j| multinomial_replicate_max(table, j, r, opts.seed, opts.one_sided, &probs, buf))
                    .fold(f64::NEG_INFINITY, f64::max)
            },
        )
        .collect();
    null.sort_by(f64::total_cmp);
    let p_value = mc_pvalue(&null, statistic);
    Ok(TestResult {
        statistic,
        p_value,
        decision: p_value < opts.alpha,
        replications: opts.reps,
        seed: opts.seed,
        argmax_ae,
    })
}

/// Null fit of the structural-zero probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipNullFit {
    pub p0_hat: f64,
    pub loglik: f64,
    /// Every selected cell is zero and the estimate sits at the upper bound.
    pub degenerate: bool,
    pub note: Option<String>,
}

/// Upper end of the search interval for `p0`.
pub const P0_MAX: f64 = 1.0 - 1e-6;

/// `log P(N = n)` under the zero-inflated Poisson with mean `mean` and
/// zero-inflation probability `p0`.
pub fn zip_ln_pmf(n: u64, mean: f64, p0: f64) -> f64 {
    if n == 0 {
        (p0 + (1.0 - p0) * (-mean).exp()).ln()
    } else {
        (1.0 - p0).ln() + poisson_ln_pmf(n, mean)
    }
}

fn selected_cells(table: &ContingencyTable, baseline: &BaselineMatrix, columns: &[usize]) -> Result<Vec<(u64, f64)>> {
    if baseline.n_rows() != table.n_rows() || baseline.n_cols() != table.n_cols() {
        return Err(Error::InvalidArgument("baseline shape does not match table".into()));
    }
    let mut cells = Vec::new();
    for &j in columns {
        if j >= table.n_cols() {
            return Err(Error::IndexOutOfRange(format!("drug column {j}")));
        }
        for i in 0..table.n_rows() {
            let (n, e) = (table.count(i, j), baseline.get(i, j));
            if e <= 0.0 {
                if n > 0 {
                    return Err(Error::ImpossibleBaseline { ae: i, drug: j, n });
                }
                continue;
            }
            cells.push((n, e));
        }
    }
    Ok(cells)
}

/// Maximise the null (`λ = 1`) ZIP likelihood of the selected columns over
/// `p0 ∈ [0, 1 - 1e-6]` by golden-section search.
pub fn fit_zip_null(table: &ContingencyTable, baseline: &BaselineMatrix, columns: &[usize]) -> Result<ZipNullFit> {
    let cells = selected_cells(table, baseline, columns)?;
    Ok(fit_zip_null_cells(&cells))
}

/// [`fit_zip_null`] on raw `(N, E)` pairs with `E > 0`.
pub fn fit_zip_null_cells(cells: &[(u64, f64)]) -> ZipNullFit {
    let loglik = |p0: f64| cells.iter().map(|&(n, e)| zip_ln_pmf(n, e, p0)).sum::<f64>();
    let zeros = cells.iter().filter(|c| c.0 == 0).count();
    if zeros == 0 {
        return ZipNullFit {
            p0_hat: 0.0,
            loglik: loglik(0.0),
            degenerate: false,
            note: Some("no zero cells; p0 fixed at 0".into()),
        };
    }
    if zeros == cells.len() {
        return ZipNullFit {
            p0_hat: P0_MAX,
            loglik: loglik(P0_MAX),
            degenerate: true,
            note: Some("all selected cells are zero; p0 at the upper bound".into()),
        };
    }
    // The log-likelihood is concave in p0, so golden section finds the
    // maximum; the endpoints are checked separately.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, P0_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (loglik(c), loglik(d));
    while b - a > 1e-6 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = loglik(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = loglik(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, loglik(mid));
    for x in [0.0, P0_MAX] {
        let f = loglik(x);
        if f > best.1 {
            best = (x, f);
        }
    }
    ZipNullFit {
        p0_hat: best.0,
        loglik: best.1,
        degenerate: false,
        note: None,
    }
}

/// Null model for the pseudo-LRT bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullModel {
    Poisson,
    Zip,
}

impl NullModel {
    pub fn name(self) -> &'static str {
        match self {
            Self::Poisson => "poisson",
            Self::Zip => "zip",
        }
    }
}

/// One-sided Poisson cell statistic `N log(N/E) - (N - E)` for `N > E`,
/// else 0.
///
/// Under the zero-inflated model with a shared `p0` the profile statistic
/// with `λ̂ = max(N/E, 1)` reduces to the same expression: for `N > 0` the
/// factor `1 - p0` cancels, and for `N = 0` the maximiser is `λ̂ = 1`.
pub fn pseudo_cell_statistic(n: u64, e: f64) -> f64 {
    let nf = n as f64;
    if nf > e && e > 0.0 {
        (nf * (nf / e).ln() - (nf - e)).max(0.0)
    } else {
        0.0
    }
}

/// Pseudo-LRT for each drug in `drugs`. The null is the fitted model with
/// `λ = 1` and `E` held fixed; for [`NullModel::Zip`] the structural-zero
/// probability is estimated once from the selected columns.
pub fn pseudo_lrt(
    table: &ContingencyTable,
    baseline: &BaselineMatrix,
    drugs: &[usize],
    model: NullModel,
    opts: &McOptions,
) -> Result<LrtAnalysis> {
    opts.check()?;
    check_drugs(table, drugs)?;
    selected_cells(table, baseline, drugs)?;
    let zip_fit = match model {
        NullModel::Poisson => None,
        NullModel::Zip => Some(fit_zip_null(table, baseline, drugs)?),
    };
    let p0 = zip_fit.as_ref().map_or(0.0, |f| f.p0_hat);
    let rows = table.n_rows();
    let observed: Vec<Vec<f64>> = drugs
        .iter()
        .map(|&j| (0..rows).map(|i| pseudo_cell_statistic(table.count(i, j), baseline.get(i, j))).collect())
        .collect();
    let maxima: Vec<Vec<f64>> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            drugs
                .iter()
                .map(|&j| {
                    let mut g = rng::stream(opts.seed, &[r as u64, j as u64]);
                    (0..rows)
                        .map(|i| {
                            let e = baseline.get(i, j);
                            pseudo_cell_statistic(rng::zip(e, p0, &mut g), e)
                        })
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let active = vec![true; drugs.len()];
    let mut out = assemble(table, drugs, observed, maxima, opts, &active);
    out.zip_fit = zip_fit;
    Ok(out)
}

/// Write `drug,statistic,p_value,decision,argmax_ae,reps,seed,model` rows.
pub fn write_csv<W: Write>(table: &ContingencyTable, analysis: &LrtAnalysis, model: &str, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["drug", "statistic", "p_value", "decision", "argmax_ae", "reps", "seed", "model"])?;
    for (&j, r) in analysis.drugs.iter().zip(&analysis.per_drug) {
        write_result(&mut w, &table.drug_labels()[j], table, r, model)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the extended test as a single row whose `drug` field lists the
/// tested columns separated by `;`.
pub fn write_ext_csv<W: Write>(table: &ContingencyTable, drugs: &[usize], result: &TestResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["drug", "statistic", "p_value", "decision", "argmax_ae", "reps", "seed", "model"])?;
    let label = drugs.iter().map(|&j| table.drug_labels()[j].as_str()).collect::<Vec<_>>().join(";");
    write_result(&mut w, &label, table, result, "ext-multinomial")?;
    w.flush()?;
    Ok(())
}

/// Write `ae,drug,N,statistic,p_value,decision` for every tested cell, the
/// decision being `p_value < alpha`.
pub fn write_cells_csv<W: Write>(table: &ContingencyTable, analysis: &LrtAnalysis, alpha: f64, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ae", "drug", "N", "statistic", "p_value", "decision"])?;
    for i in 0..table.n_rows() {
        for &j in &analysis.drugs {
            let Some(p) = analysis.cell_pvalues[(i, j)] else { continue };
            w.write_record([
                table.ae_labels()[i].as_str(),
                table.drug_labels()[j].as_str(),
                &table.count(i, j).to_string(),
                &fmt_f64(analysis.cell_statistics[(i, j)]),
                &fmt_f64(p),
                if p < alpha { "true" } else { "false" },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_result<W: Write>(w: &mut csv::Writer<W>, drug: &str, table: &ContingencyTable, r: &TestResult, model: &str) -> Result<()> {
    w.write_record([
        drug,
        &fmt_f64(r.statistic),
        &fmt_f64(r.p_value),
        if r.decision { "true" } else { "false" },
        r.argmax_ae.map_or("", |i| table.ae_labels()[i].as_str()),
        &r.replications.to_string(),
        &r.seed.to_string(),
        model,
    ])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::expected_baseline;

    fn table(rows: Vec<Vec<u64>>) -> ContingencyTable {
        let ae = (0..rows.len()).map(|i| format!("AE{i}")).collect();
        let drugs = (0..rows[0].len()).map(|j| format!("D{j}")).collect();
        ContingencyTable::new(ae, drugs, rows).unwrap()
    }

    #[test]
    fn null_equality_cell_is_zero() {
        let t = table(vec![vec![2, 8], vec![8, 32]]);
        assert_eq!(log_lr_cell(&t, 0, 0, false).unwrap(), 0.0);
        let r = lrt_rates(&t, 0, 0).unwrap();
        assert_eq!((r.p, r.q, r.p0), (0.2, 0.2, 0.2));
    }

    #[test]
    fn direct_loglik_evaluation() {
        // N_ij = 20, N_i• = 40, N_•j = 110, N_•• = 310
        let t = table(vec![vec![20, 20], vec![90, 180]]);
        let (p, q, p0) = (20.0f64 / 40.0, 90.0f64 / 270.0, 110.0f64 / 310.0);
        let direct = 20.0 * p.ln() + 90.0 * q.ln() - 110.0 * p0.ln();
        assert!((log_lr_cell(&t, 0, 0, false).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn one_sided_zeroes_protective_cells() {
        let t = table(vec![vec![1, 30], vec![60, 40]]);
        assert!(log_lr_cell(&t, 0, 0, false).unwrap() > 0.0);
        assert_eq!(log_lr_cell(&t, 0, 0, true).unwrap(), 0.0);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let t = table(vec![vec![0, 0], vec![5, 5]]);
        assert!(matches!(log_lr_cell(&t, 0, 0, false), Err(Error::DegenerateMarginals { .. })));
        assert_eq!(mlr_drug(&t, 0, false).unwrap().0, 0.0);
    }

    #[test]
    fn single_row_and_tie_break() {
        let t = table(vec![vec![3, 7]]);
        assert_eq!(mlr_drug(&t, 0, false).unwrap(), (log_lr_cell(&t, 0, 0, false).unwrap(), 0));
        let null = table(vec![vec![1, 2], vec![2, 4], vec![3, 6]]);
        assert_eq!(mlr_drug(&null, 0, false).unwrap(), (0.0, 0));
    }

    #[test]
    fn zero_statistic_has_unit_pvalue() {
        let t = table(vec![vec![1, 2], vec![2, 4], vec![3, 6]]);
        let opts = McOptions { reps: 99, ..Default::default() };
        let r = mc_null_pvalue(&t, 0, &opts).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.decision);
        assert!(mc_null_pvalue(&t, 0, &McOptions { reps: 0, ..opts }).is_err());
    }

    #[test]
    fn empty_column_is_not_tested() {
        let t = table(vec![vec![0, 2], vec![0, 4]]);
        let r = mc_null_pvalue(&t, 0, &McOptions::default()).unwrap();
        assert_eq!((r.p_value, r.decision), (1.0, false));
    }

    #[test]
    fn pvalue_bounds() {
        assert_eq!(mc_pvalue(&[1.0, 2.0, 3.0], 10.0), 0.25);
        assert_eq!(mc_pvalue(&[1.0, 2.0, 3.0], 2.0), 0.75);
        assert_eq!(mc_pvalue(&[1.0, 2.0, 3.0], 0.0), 1.0);
    }

    #[test]
    fn pseudo_statistic_examples() {
        assert_eq!(pseudo_cell_statistic(5, 5.0), 0.0);
        assert!((pseudo_cell_statistic(1, 0.01) - (100f64.ln() - 0.99)).abs() < 1e-12);
        assert!((pseudo_cell_statistic(1, 0.01) - 3.615).abs() < 1e-3);
    }

    #[test]
    fn impossible_baseline() {
        let t = table(vec![vec![1, 2], vec![2, 4]]);
        let e = BaselineMatrix::from_grid(Grid::from_vec(2, 2, vec![0.0, 2.0, 2.0, 4.0]));
        assert!(matches!(
            pseudo_lrt(&t, &e, &[0], NullModel::Poisson, &McOptions::default()),
            Err(Error::ImpossibleBaseline { .. })
        ));
    }

    #[test]
    fn zip_fit_boundaries() {
        let no_zeros = [(3, 2.0), (1, 1.5), (4, 3.0)];
        assert_eq!(fit_zip_null_cells(&no_zeros).p0_hat, 0.0);
        let all_zero = [(0, 2.0), (0, 1.5)];
        let f = fit_zip_null_cells(&all_zero);
        assert!(f.degenerate && f.p0_hat == P0_MAX);
    }

    #[test]
    fn zip_fit_matches_closed_form_for_constant_e() {
        // With a common E the MLE of P(N = 0) = p0 + (1 - p0) e^{-E} is the
        // zero fraction, when that exceeds e^{-E}.
        let e = 2.0f64;
        let mut cells = vec![(0u64, e); 40];
        cells.extend(std::iter::repeat_n((2u64, e), 60));
        let f = fit_zip_null_cells(&cells);
        let z = (-e).exp();
        let expected = (0.4 - z) / (1.0 - z);
        assert!((f.p0_hat - expected).abs() < 2e-6, "{} vs {}", f.p0_hat, expected);
    }

    #[test]
    fn pseudo_lrt_is_deterministic() {
        let t = table(vec![vec![12, 30], vec![3, 300], vec![5, 200], vec![1, 250]]);
        let e = expected_baseline(&t).unwrap();
        let opts = McOptions { reps: 199, ..Default::default() };
        let a = pseudo_lrt(&t, &e, &[0], NullModel::Zip, &opts).unwrap();
        let b = pseudo_lrt(&t, &e, &[0], NullModel::Zip, &opts).unwrap();
        assert_eq!((&a.per_drug, &a.cell_pvalues), (&b.per_drug, &b.cell_pvalues));
        assert!(a.per_drug[0].p_value < 0.05);
        assert_eq!(a.per_drug[0].argmax_ae, Some(0));
    }
}
