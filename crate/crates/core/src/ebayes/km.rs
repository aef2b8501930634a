//! Nonparametric maximum likelihood prior on a fixed grid.
//!
//! The masses `g_k` maximise `Σ_c log Σ_k g_k Poisson(N_c; v_k E_c)` over the
//! simplex. The EM fixed point `g_k ← g_k · mean_c(P_ck / f_c)` increases the
//! objective at every step.

use super::{cells_from_table, usable_cells, CellObs, FitInfo, FittedPrior, MixturePrior};
use crate::error::{Error, Result};
use crate::special::poisson_ln_pmf;
use crate::table::{BaselineMatrix, ContingencyTable};

const TOL: f64 = 1e-9;
const MAX_ITER: usize = 5000;

pub fn fit_km(table: &ContingencyTable, baseline: &BaselineMatrix, support: &[f64]) -> Result<FittedPrior> {
    fit_km_cells(&cells_from_table(table, baseline)?, support)
}

pub(crate) fn check_support(support: &[f64]) -> Result<()> {
    if support.is_empty() || support[0] <= 0.0 || support.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("support must be non-empty, positive and strictly increasing".into()));
    }
    Ok(())
}

/// Row-scaled likelihood matrix: `p[c * K + k] = exp(log P_ck - m_c)` with
/// `m_c = max_k log P_ck`, returned with `Σ_c m_c`.
pub(crate) fn scaled_likelihood(cells: &[CellObs], support: &[f64]) -> (Vec<f64>, f64) {
    let k = support.len();
    let mut p = vec![0.0; cells.len() * k];
    let mut offset = 0.0;
    for (c, cell) in cells.iter().enumerate() {
        let row = &mut p[c * k..(c + 1) * k];
        for (x, &v) in row.iter_mut().zip(support) {
            *x = poisson_ln_pmf(cell.n, v * cell.e);
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|x| *x = (*x - m).exp());
        offset += m;
    }
    (p, offset)
}

pub fn fit_km_cells(cells: &[CellObs], support: &[f64]) -> Result<FittedPrior> {
    check_support(support)?;
    let cells = usable_cells(cells, 1, "KM fit")?;
    let k = support.len();
    let n = cells.len() as f64;
    let (p, offset) = scaled_likelihood(&cells, support);
    let mut g = vec![1.0 / k as f64; k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut ratio = vec![0.0; k];
    loop {
        ratio.iter_mut().for_each(|x| *x = 0.0);
        let mut obj = offset;
        for row in p.chunks_exact(k) {
            let f: f64 = row.iter().zip(&g).map(|(a, b)| a * b).sum();
            obj += f.ln();
            for (acc, &x) in ratio.iter_mut().zip(row) {
                *acc += x / f;
            }
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if obj - prev <= TOL * prev.abs() {
                trace.push(obj);
                converged = true;
                break;
            }
        }
        trace.push(obj);
        if iterations >= MAX_ITER {
            break;
        }
        iterations += 1;
        for (gk, rk) in g.iter_mut().zip(&ratio) {
            *gk *= rk / n;
        }
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|x| *x /= s);
    }
    let objective = *trace.last().expect("evaluated");
    Ok(FittedPrior {
        prior: MixturePrior::discrete(support.to_vec(), g),
        fit: FitInfo {
            method: "km".into(),
            iterations,
            converged,
            objective,
            log_likelihood: objective,
            tolerance: TOL,
            max_iter: MAX_ITER,
            notes: if converged { Vec::new() } else { vec![format!("stopped at the iteration limit {MAX_ITER}")] },
            trace,
        },
    })
}
