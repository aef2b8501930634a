//! Two-component gamma mixture prior fitted by marginal maximum likelihood.
//!
//! Parameters are optimised on an unconstrained scale (log shapes and
//! rates, logit weight) by BFGS with analytic gradients from several
//! starting points; the best local optimum wins.

use super::{usable_cells, CellObs, Cells, FitInfo, FittedPrior, GammaComponent, MixturePrior};
use crate::error::{Error, Result};
use crate::optim::{minimize, BfgsOptions};
use crate::parallel;
use crate::special::{digamma, ln_gamma};
use crate::table::{BaselineMatrix, ContingencyTable};

const MIN_CELLS: usize = 10;
/// Box on log shapes and rates; outside it the objective is `+inf`.
const LOG_BOUND: f64 = 20.0;

fn opts() -> BfgsOptions {
    BfgsOptions {
        max_iter: 1000,
        grad_tol: 1e-5,
        rel_tol: 1e-13,
    }
}

/// `ln Γ(n+α) - ln Γ(α)` and `ψ(n+α) - ψ(α)` for each distinct count.
struct ShapeTerms {
    lg: Vec<f64>,
    dg: Vec<f64>,
}

impl ShapeTerms {
    fn new(cells: &Cells, alpha: f64) -> Self {
        let (la, da) = (ln_gamma(alpha), digamma(alpha));
        Self {
            lg: cells.uniq.iter().map(|&u| ln_gamma(u + alpha) - la).collect(),
            dg: cells.uniq.iter().map(|&u| digamma(u + alpha) - da).collect(),
        }
    }
}

/// Log NB marginal of cell `c` and its gradient in `(ln α, ln β)`.
fn component(cells: &Cells, t: &ShapeTerms, c: usize, alpha: f64, beta: f64, ln_beta: f64) -> (f64, f64, f64) {
    let (n, e) = (cells.n[c], cells.e[c]);
    let l1p = (e / beta).ln_1p();
    let u = cells.uidx[c];
    let l = t.lg[u] - cells.ln_n_fact[c] + n * (cells.ln_e[c] - ln_beta) - (alpha + n) * l1p;
    let d_a = alpha * (t.dg[u] - l1p);
    let d_b = alpha - (alpha + n) * beta / (e + beta);
    (l, d_a, d_b)
}

fn out_of_box(x: &[f64]) -> bool {
    x.iter().any(|v| !v.is_finite() || v.abs() > LOG_BOUND)
}

/// Negative log-likelihood and gradient of the two-gamma model at
/// `x = (ln α1, ln β1, ln α2, ln β2, logit ω)`.
fn two_gamma_objective(cells: &Cells, x: &[f64]) -> (f64, Vec<f64>) {
    if out_of_box(&x[..4]) || x[4].abs() > 2.0 * LOG_BOUND {
        return (f64::INFINITY, vec![0.0; 5]);
    }
    let (a1, b1, a2, b2) = (x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp());
    let w = 1.0 / (1.0 + (-x[4]).exp());
    let (lw1, lw2) = (w.ln(), (1.0 - w).ln());
    let (t1, t2) = (ShapeTerms::new(cells, a1), ShapeTerms::new(cells, a2));
    let acc = parallel::sum_vec(cells.len(), 6, |c, acc| {
        let (l1, da1, db1) = component(cells, &t1, c, a1, b1, x[1]);
        let (l2, da2, db2) = component(cells, &t2, c, a2, b2, x[3]);
        let (u1, u2) = (lw1 + l1, lw2 + l2);
        let m = u1.max(u2);
        let lse = m + ((u1 - m).exp() + (u2 - m).exp()).ln();
        let r1 = (u1 - lse).exp();
        let r2 = 1.0 - r1;
        acc[0] += lse;
        acc[1] += r1 * da1;
        acc[2] += r1 * db1;
        acc[3] += r2 * da2;
        acc[4] += r2 * db2;
        acc[5] += r1 - w;
    });
    (-acc[0], acc[1..].iter().map(|g| -g).collect())
}

fn single_gamma_objective(cells: &Cells, x: &[f64]) -> (f64, Vec<f64>) {
    if out_of_box(x) {
        return (f64::INFINITY, vec![0.0; 2]);
    }
    let (a, b) = (x[0].exp(), x[1].exp());
    let t = ShapeTerms::new(cells, a);
    let acc = parallel::sum_vec(cells.len(), 3, |c, acc| {
        let (l, da, db) = component(cells, &t, c, a, b, x[1]);
        acc[0] += l;
        acc[1] += da;
        acc[2] += db;
    });
    (-acc[0], vec![-acc[1], -acc[2]])
}

fn table_cells(table: &ContingencyTable, baseline: &BaselineMatrix) -> Result<Vec<CellObs>> {
    super::cells_from_table(table, baseline)
}

/// Fit a single gamma prior; the nested special case of [`fit_gps`].
pub fn fit_single_gamma_cells(cells: &[CellObs]) -> Result<FittedPrior> {
    let cells = usable_cells(cells, MIN_CELLS, "single-gamma fit")?;
    let prepared = Cells::new(&cells);
    let f = |x: &[f64]| single_gamma_objective(&prepared, x);
    // Moment start on smoothed ratios, plus an exponential start.
    let ratios: Vec<f64> = cells.iter().map(|c| (c.n as f64 + 0.5) / (c.e + 0.5)).collect();
    let m = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let v = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / ratios.len() as f64;
    let v = v.max(1e-3 * m * m);
    let starts = [vec![(m * m / v).ln(), (m / v).ln()], vec![0.0, 0.0]];
    let best = starts
        .iter()
        .map(|s| minimize(f, s, opts()))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("non-empty");
    if !best.converged {
        return Err(Error::FitFailure(format!(
            "single-gamma optimiser stopped after {} iterations without converging",
            best.iterations
        )));
    }
    let prior = MixturePrior::gamma(vec![GammaComponent {
        shape: best.x[0].exp(),
        rate: best.x[1].exp(),
        weight: 1.0,
    }]);
    Ok(FittedPrior {
        prior,
        fit: FitInfo {
            method: "single-gamma".into(),
            iterations: best.iterations,
            converged: true,
            objective: -best.value,
            log_likelihood: -best.value,
            tolerance: opts().grad_tol,
            max_iter: opts().max_iter,
            notes: Vec::new(),
            trace: best.trace.iter().map(|v| -v).collect(),
        },
    })
}

/// Two-gamma (GPS) prior for the cells of `table`.
pub fn fit_gps(table: &ContingencyTable, baseline: &BaselineMatrix) -> Result<FittedPrior> {
    fit_gps_cells(&table_cells(table, baseline)?)
}

/// Two-gamma (GPS) prior from raw cells. The returned components are
/// ordered so that the first carries weight at least 1/2.
pub fn fit_gps_cells(cells: &[CellObs]) -> Result<FittedPrior> {
    let cells = usable_cells(cells, MIN_CELLS, "GPS fit")?;
    let prepared = Cells::new(&cells);
    let f = |x: &[f64]| two_gamma_objective(&prepared, x);
    let logit = |w: f64| (w / (1.0 - w)).ln();
    let mut starts: Vec<[f64; 5]> = vec![
        [0.2, 0.1, 2.0, 4.0, 1.0 / 3.0],
        [1.0, 1.0, 5.0, 1.0, 0.8],
        [10.0, 10.0, 2.0, 0.5, 0.9],
        [0.5, 0.5, 3.0, 1.0, 0.5],
        [2.0, 2.0, 1.0, 0.1, 0.7],
    ];
    let mut notes = Vec::new();
    match fit_single_gamma_cells(&cells) {
        Ok(single) => {
            if let MixturePrior::GammaMixture { components } = &single.prior {
                let c = components[0];
                starts.push([c.shape, c.rate, c.shape, c.rate / 3.0, 0.9]);
            }
        }
        Err(e) => notes.push(format!("single-gamma start unavailable: {e}")),
    }
    let runs: Vec<_> = starts
        .iter()
        .map(|s| {
            let x0 = [s[0].ln(), s[1].ln(), s[2].ln(), s[3].ln(), logit(s[4])];
            minimize(f, &x0, opts())
        })
        .collect();
    let n_converged = runs.iter().filter(|r| r.converged).count();
    let best = runs
        .iter()
        .filter(|r| r.converged)
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| {
            let detail: Vec<String> = runs.iter().map(|r| format!("{} iterations, -loglik {}", r.iterations, r.value)).collect();
            Error::FitFailure(format!("GPS optimiser did not converge from any start: {}", detail.join("; ")))
        })?;
    notes.push(format!("{n_converged} of {} starts converged", runs.len()));
    let x = &best.x;
    let w = 1.0 / (1.0 + (-x[4]).exp());
    let mut comps = vec![
        GammaComponent { shape: x[0].exp(), rate: x[1].exp(), weight: w },
        GammaComponent { shape: x[2].exp(), rate: x[3].exp(), weight: 1.0 - w },
    ];
    if w < 0.5 {
        comps.swap(0, 1);
    }
    Ok(FittedPrior {
        prior: MixturePrior::gamma(comps),
        fit: FitInfo {
            method: "gps".into(),
            iterations: best.iterations,
            converged: true,
            objective: -best.value,
            log_likelihood: -best.value,
            tolerance: opts().grad_tol,
            max_iter: opts().max_iter,
            notes,
            trace: best.trace.iter().map(|v| -v).collect(),
        },
    })
}
