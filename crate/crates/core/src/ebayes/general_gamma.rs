//! Sparse overfitted gamma mixture ("general-gamma") fitted by ECM.
//!
//! The prior is `Σ_k ω_k Gamma(r_k, rate 1/h_k)` with `K` deliberately
//! large and a symmetric `Dirichlet(a, …, a)` penalty on the weights, `a < 1`,
//! which drives superfluous weights to zero. Each iteration
//!
//! 1. computes responsibilities `τ_ck` (E-step),
//! 2. maximises the penalised expected log-likelihood over the weights,
//!    `ω_k ∝ max(n_k + a - 1, ·)`, keeping every live weight at or above a
//!    tiny floor so the penalty stays finite,
//! 3. improves each `(r_k, h_k)` by one damped Newton step on the
//!    component's expected log-likelihood in `(log r, log h)`.
//!
//! After `freeze_after` iterations weights at or below `freeze_below` are set
//! to exactly zero and stay there. The tracked objective is
//! `L + (a - 1) Σ_k log max(ω_k, floor)`, which ECM does not decrease.
//!
//! ECM on its own stalls with several near-duplicate components sharing one
//! cluster. Once a coarse ECM pass has settled, the fitter tries dropping
//! each active component and merging each pair of neighbours, reruns ECM
//! briefly after each move and keeps the move whenever the objective ends
//! up higher. A final ECM pass polishes the survivors to `tol`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{usable_cells, CellObs, Cells, FitInfo, FittedPrior, GammaComponent, MixturePrior};
use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, trigamma};
use crate::table::{BaselineMatrix, ContingencyTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralGammaOptions {
    /// Number of components in the overfitted mixture.
    pub k: usize,
    /// Symmetric Dirichlet parameter, in `(0, 1)`.
    pub dirichlet_alpha: f64,
    /// Relative improvement of the objective below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    pub freeze_after: usize,
    pub freeze_below: f64,
}

impl Default for GeneralGammaOptions {
    fn default() -> Self {
        Self {
            k: 100,
            dirichlet_alpha: 0.5,
            tol: 1e-8,
            max_iter: 2000,
            freeze_after: 50,
            freeze_below: 1e-6,
        }
    }
}

const WEIGHT_FLOOR: f64 = 1e-12;
const LN_R: (f64, f64) = (-6.907_755_278_982_137, 13.815_510_557_964_274); // r in [1e-3, 1e6]
const LN_H: (f64, f64) = (-18.420_680_743_952_367, 9.210_340_371_976_184); // h in [1e-8, 1e4]
const MIN_CELLS: usize = 10;

#[derive(Clone)]
struct Component {
    ln_r: f64,
    ln_h: f64,
    weight: f64,
}

/// `ln Γ(u + r) - ln Γ(r)` over the distinct counts.
fn lgamma_ratio(cells: &Cells, r: f64) -> Vec<f64> {
    let lr = ln_gamma(r);
    cells.uniq.iter().map(|&u| ln_gamma(u + r) - lr).collect()
}

/// `log f(N_c | r, h)` without the `-ln N_c!` term.
fn ln_nb_partial(cells: &Cells, lg: &[f64], c: usize, r: f64, h: f64, ln_h: f64) -> f64 {
    let n = cells.n[c];
    lg[cells.uidx[c]] + n * (cells.ln_e[c] + ln_h) - (r + n) * (cells.e[c] * h).ln_1p()
}

/// Responsibilities below this are treated as zero in the CM-steps.
const TAU_EPS: f64 = 1e-12;

/// A component's responsibilities in the form the CM-step needs: the cells
/// it materially covers, and the total responsibility per distinct count.
struct Share {
    cells: Vec<(usize, f64)>,
    by_count: Vec<(usize, f64)>,
}

impl Share {
    fn new(cells: &Cells, tau: &[f64]) -> Self {
        let mut per_u = vec![0.0; cells.uniq.len()];
        let mut kept = Vec::new();
        for (c, &t) in tau.iter().enumerate() {
            if t > TAU_EPS {
                kept.push((c, t));
                per_u[cells.uidx[c]] += t;
            }
        }
        let by_count = per_u.into_iter().enumerate().filter(|&(_, t)| t > 0.0).collect();
        Self { cells: kept, by_count }
    }
}

/// Expected complete-data log-likelihood of one component, up to terms
/// that do not depend on `(r, h)`.
fn q_value(cells: &Cells, share: &Share, ln_r: f64, ln_h: f64) -> f64 {
    if !(LN_R.0..=LN_R.1).contains(&ln_r) || !(LN_H.0..=LN_H.1).contains(&ln_h) {
        return f64::NEG_INFINITY;
    }
    let (r, h) = (ln_r.exp(), ln_h.exp());
    let lr = ln_gamma(r);
    let lg: f64 = share.by_count.iter().map(|&(u, t)| t * (ln_gamma(cells.uniq[u] + r) - lr)).sum();
    lg + share
        .cells
        .iter()
        .map(|&(c, t)| {
            let n = cells.n[c];
            t * (n * (cells.ln_e[c] + ln_h) - (r + n) * (cells.e[c] * h).ln_1p())
        })
        .sum::<f64>()
}

/// One damped Newton step on the component's expected log-likelihood.
fn newton_update(cells: &Cells, tau: &[f64], comp: &mut Component) {
    let share = Share::new(cells, tau);
    let (r, h) = (comp.ln_r.exp(), comp.ln_h.exp());
    let (dr, tr) = (digamma(r), trigamma(r));
    let (mut gr, mut gv, mut hrr, mut huv, mut hvv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(u, t) in &share.by_count {
        let n = cells.uniq[u];
        gr += t * (digamma(n + r) - dr);
        hrr += t * (trigamma(n + r) - tr);
    }
    for &(c, t) in &share.cells {
        let n = cells.n[c];
        let eh = cells.e[c] * h;
        let b = eh / (1.0 + eh);
        gr -= t * eh.ln_1p();
        gv += t * (n - (r + n) * b);
        huv -= t * b;
        hvv -= t * (r + n) * b * (1.0 - b);
    }
    let gu = r * gr;
    let huu = r * r * hrr + gu;
    let huv = r * huv;
    let det = huu * hvv - huv * huv;
    let (mut du, mut dv) = if huu < 0.0 && det > 0.0 {
        ((-hvv * gu + huv * gv) / det, (huv * gu - huu * gv) / det)
    } else {
        (gu / huu.abs().max(1e-8), gv / hvv.abs().max(1e-8))
    };
    let len = du.hypot(dv);
    if len > 2.0 {
        du *= 2.0 / len;
        dv *= 2.0 / len;
    }
    let q0 = q_value(cells, &share, comp.ln_r, comp.ln_h);
    let mut step = 1.0;
    for _ in 0..30 {
        let (u, v) = (comp.ln_r + step * du, comp.ln_h + step * dv);
        if q_value(cells, &share, u, v) >= q0 {
            comp.ln_r = u;
            comp.ln_h = v;
            return;
        }
        step *= 0.5;
    }
}

/// Penalised weight update: maximise `Σ c_k log ω_k` over the simplex with
/// `ω_k ≥ floor` for live components, where `c_k = n_k + a - 1`.
fn weight_update(nk: &[f64], live: &[bool], a: f64) -> Vec<f64> {
    let c: Vec<f64> = nk.iter().map(|&n| n + a - 1.0).collect();
    let mut clamped: Vec<bool> = c.iter().zip(live).map(|(&ck, &l)| l && ck <= 0.0).collect();
    let n_live = live.iter().filter(|&&l| l).count();
    if clamped.iter().filter(|&&x| x).count() == n_live {
        // No component has enough mass to beat the penalty; fall back to
        // the unpenalised update.
        let total: f64 = nk.iter().zip(live).filter(|(_, &l)| l).map(|(n, _)| n).sum();
        return nk.iter().zip(live).map(|(&n, &l)| if l { n / total } else { 0.0 }).collect();
    }
    loop {
        let n_clamped = clamped.iter().filter(|&&x| x).count() as f64;
        let free_mass: f64 = c.iter().zip(live).zip(&clamped).filter(|((_, &l), &cl)| l && !cl).map(|((ck, _), _)| ck).sum();
        let scale = (1.0 - n_clamped * WEIGHT_FLOOR) / free_mass;
        let mut changed = false;
        for k in 0..c.len() {
            if live[k] && !clamped[k] && c[k] * scale < WEIGHT_FLOOR {
                clamped[k] = true;
                changed = true;
            }
        }
        if !changed {
            return (0..c.len())
                .map(|k| match (live[k], clamped[k]) {
                    (false, _) => 0.0,
                    (true, true) => WEIGHT_FLOOR,
                    (true, false) => c[k] * scale,
                })
                .collect();
        }
    }
}

/// Means log-spaced between the 1% and 99% quantiles of the raw ratios
/// (zeros lifted to 0.01), crossed with a ladder of shapes when `K` is large
/// enough. Every starting component is distinct.
fn initial_components(cells: &[CellObs], k: usize) -> Vec<Component> {
    let mut ratios: Vec<f64> = cells.iter().map(|c| (c.n as f64 / c.e).max(0.01)).collect();
    ratios.sort_by(f64::total_cmp);
    let lo = super::grid::quantile(&ratios, 0.01).ln();
    let hi = super::grid::quantile(&ratios, 0.99).max(ratios[0] * 10.0).ln();
    let shapes: &[f64] = if k >= 8 { &[0.5, 2.0, 8.0, 32.0] } else { &[4.0] };
    let n_means = k.div_ceil(shapes.len());
    (0..k)
        .map(|idx| {
            let t = if n_means == 1 { 0.5 } else { (idx / shapes.len()) as f64 / (n_means - 1) as f64 };
            let m = (lo + t * (hi - lo)).exp();
            let r: f64 = shapes[idx % shapes.len()];
            Component {
                ln_r: r.ln(),
                ln_h: (m / r).ln(),
                weight: 1.0 / k as f64,
            }
        })
        .collect()
}

struct Ecm<'a> {
    cells: &'a Cells,
    a: f64,
    lnfact_total: f64,
    tau: Vec<f64>,
}

struct Run {
    objective: f64,
    iterations: usize,
    converged: bool,
}

impl Ecm<'_> {
    fn objective_and_responsibilities(&mut self, comps: &[Component]) -> f64 {
        let cells = self.cells;
        let n_cells = cells.len();
        let live: Vec<usize> = (0..comps.len()).filter(|&j| comps[j].weight > 0.0).collect();
        let logf: Vec<Vec<f64>> = live
            .par_iter()
            .map(|&j| {
                let comp = &comps[j];
                let (r, h) = (comp.ln_r.exp(), comp.ln_h.exp());
                let lg = lgamma_ratio(cells, r);
                let lw = comp.weight.ln();
                (0..n_cells).map(|c| lw + ln_nb_partial(cells, &lg, c, r, h, comp.ln_h)).collect()
            })
            .collect();
        self.tau.iter_mut().for_each(|t| *t = 0.0);
        let mut loglik = -self.lnfact_total;
        for c in 0..n_cells {
            let m = logf.iter().map(|f| f[c]).fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = logf.iter().map(|f| (f[c] - m).exp()).sum();
            let lse = m + s.ln();
            loglik += lse;
            for (f, &j) in logf.iter().zip(&live) {
                self.tau[j * n_cells + c] = (f[c] - lse).exp();
            }
        }
        loglik + (self.a - 1.0) * comps.iter().map(|c| c.weight.max(WEIGHT_FLOOR).ln()).sum::<f64>()
    }

    /// ECM sweeps from `comps` until the relative improvement drops below
    /// `tol`, `max_iter` sweeps are done or the objective exceeds `target`.
    /// `first_iter` offsets the iteration count used by the freezing rule.
    /// Objective values are appended to `trace`.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        comps: &mut [Component],
        opts: &GeneralGammaOptions,
        tol: f64,
        max_iter: usize,
        target: f64,
        first_iter: usize,
        trace: &mut Vec<f64>,
    ) -> Run {
        let n_cells = self.cells.len();
        let mut prev = f64::NEG_INFINITY;
        let mut iterations = 0;
        loop {
            let objective = self.objective_and_responsibilities(comps);
            trace.push(objective);
            if prev.is_finite() && objective - prev <= tol * prev.abs() {
                return Run { objective, iterations, converged: true };
            }
            if iterations >= max_iter || objective > target {
                return Run { objective, iterations, converged: false };
            }
            prev = objective;
            iterations += 1;

            let live: Vec<bool> = comps.iter().map(|c| c.weight > 0.0).collect();
            let nk: Vec<f64> = (0..comps.len()).map(|j| self.tau[j * n_cells..(j + 1) * n_cells].iter().sum()).collect();
            for (c, w) in comps.iter_mut().zip(weight_update(&nk, &live, self.a)) {
                c.weight = w;
            }
            let tau = &self.tau;
            comps.par_iter_mut().enumerate().for_each(|(j, comp)| {
                if comp.weight > 0.0 && nk[j] > 1e-8 {
                    newton_update(self.cells, &tau[j * n_cells..(j + 1) * n_cells], comp);
                }
            });
            if first_iter + iterations >= opts.freeze_after {
                freeze(comps, opts.freeze_below);
            }
        }
    }
}

fn freeze(comps: &mut [Component], below: f64) {
    let mut any = false;
    for c in comps.iter_mut().filter(|c| c.weight > 0.0 && c.weight <= below) {
        c.weight = 0.0;
        any = true;
    }
    if any {
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= total);
    }
}

/// Mixtures with one component fewer than `comps`: each active component
/// dropped (smallest weight first), then each pair of neighbours in mean
/// replaced by a single moment-matched component.
fn candidate_moves(comps: &[Component]) -> Vec<Vec<Component>> {
    let mut active: Vec<usize> = (0..comps.len()).filter(|&j| comps[j].weight > 0.0).collect();
    if active.len() <= 1 {
        return Vec::new();
    }
    let mut moves = Vec::new();
    active.sort_by(|&x, &y| comps[x].weight.total_cmp(&comps[y].weight));
    for &j in &active {
        let mut trial = comps.to_vec();
        trial[j].weight = 0.0;
        let total: f64 = trial.iter().map(|c| c.weight).sum();
        trial.iter_mut().for_each(|c| c.weight /= total);
        moves.push(trial);
    }
    let moments = |c: &Component| {
        let (r, h) = (c.ln_r.exp(), c.ln_h.exp());
        (r * h, r * h * h)
    };
    active.sort_by(|&x, &y| moments(&comps[x]).0.total_cmp(&moments(&comps[y]).0));
    for pair in active.windows(2) {
        let (x, y) = (pair[0], pair[1]);
        let w = comps[x].weight + comps[y].weight;
        let ((m1, v1), (m2, v2)) = (moments(&comps[x]), moments(&comps[y]));
        let m = (comps[x].weight * m1 + comps[y].weight * m2) / w;
        let second = (comps[x].weight * (v1 + m1 * m1) + comps[y].weight * (v2 + m2 * m2)) / w;
        let var = (second - m * m).max(m * m * 1e-6);
        let mut trial = comps.to_vec();
        trial[x] = Component {
            ln_r: (m * m / var).ln().clamp(LN_R.0, LN_R.1),
            ln_h: (var / m).ln().clamp(LN_H.0, LN_H.1),
            weight: w,
        };
        trial[y].weight = 0.0;
        moves.push(trial);
    }
    moves
}

/// Sweeps allowed after each tentative removal or merge.
const PRUNE_SWEEPS: usize = 200;
const PRUNE_TOL: f64 = 1e-7;
/// Tolerance of the ECM pass that precedes pruning.
const COARSE_TOL: f64 = 1e-5;

/// General-gamma prior for the cells of `table`.
pub fn fit_general_gamma(table: &ContingencyTable, baseline: &BaselineMatrix, opts: &GeneralGammaOptions) -> Result<FittedPrior> {
    fit_general_gamma_cells(&super::cells_from_table(table, baseline)?, opts)
}

/// General-gamma prior from raw cells. Components are returned in order of
/// increasing mean, inactive ones dropped.
pub fn fit_general_gamma_cells(cells: &[CellObs], opts: &GeneralGammaOptions) -> Result<FittedPrior> {
    if opts.k < 2 {
        return Err(Error::InvalidArgument("general-gamma needs K >= 2".into()));
    }
    if !(opts.dirichlet_alpha > 0.0 && opts.dirichlet_alpha < 1.0) {
        return Err(Error::InvalidArgument("Dirichlet parameter must lie in (0, 1)".into()));
    }
    let obs = usable_cells(cells, MIN_CELLS, "general-gamma fit")?;
    let cells = Cells::new(&obs);
    let mut ecm = Ecm {
        cells: &cells,
        a: opts.dirichlet_alpha,
        lnfact_total: cells.ln_n_fact.iter().sum(),
        tau: vec![0.0; opts.k * cells.len()],
    };
    let mut comps = initial_components(&obs, opts.k);
    let mut trace = Vec::new();
    let mut notes = Vec::new();
    let first = ecm.run(&mut comps, opts, opts.tol.max(COARSE_TOL), opts.max_iter, f64::INFINITY, 0, &mut trace);
    let mut iterations = first.iterations;
    let mut objective = first.objective;

    let mut accepted = 0;
    'prune: loop {
        for mut trial in candidate_moves(&comps) {
            let mut scratch = Vec::new();
            let run = ecm.run(&mut trial, opts, PRUNE_TOL, PRUNE_SWEEPS, objective, iterations, &mut scratch);
            iterations += run.iterations;
            if run.objective > objective {
                comps = trial;
                objective = run.objective;
                trace.push(objective);
                accepted += 1;
                continue 'prune;
            }
        }
        break;
    }
    if accepted > 0 {
        notes.push(format!("{accepted} removals or merges accepted after ECM convergence"));
    }
    let budget = opts.max_iter.saturating_sub(first.iterations);
    let last = ecm.run(&mut comps, opts, opts.tol, budget, f64::INFINITY, iterations, &mut trace);
    iterations += last.iterations;
    let objective = last.objective.max(objective);
    if !last.converged {
        notes.push(format!("stopped at the iteration limit {}", opts.max_iter));
    }

    let mut out: Vec<GammaComponent> = comps
        .iter()
        .filter(|c| c.weight > opts.freeze_below)
        .map(|c| GammaComponent {
            shape: c.ln_r.exp(),
            rate: (-c.ln_h).exp(),
            weight: c.weight,
        })
        .collect();
    let total: f64 = out.iter().map(|c| c.weight).sum();
    out.iter_mut().for_each(|c| c.weight /= total);
    out.sort_by(|x, y| x.mean().total_cmp(&y.mean()));
    let prior = MixturePrior::gamma(out);
    let log_likelihood = prior.log_likelihood(&obs);
    Ok(FittedPrior {
        prior,
        fit: FitInfo {
            method: "general-gamma".into(),
            iterations,
            converged: last.converged,
            objective,
            log_likelihood,
            tolerance: opts.tol,
            max_iter: opts.max_iter,
            notes,
            trace,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_update_matches_closed_form_without_clamping() {
        let w = weight_update(&[10.0, 30.0, 60.0], &[true, true, true], 0.5);
        let c = [9.5, 29.5, 59.5];
        let s: f64 = c.iter().sum();
        for (wk, ck) in w.iter().zip(c) {
            assert!((wk - ck / s).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_update_floors_small_components() {
        let w = weight_update(&[0.2, 50.0, 0.0], &[true, true, false], 0.5);
        assert_eq!(w[0], WEIGHT_FLOOR);
        assert_eq!(w[2], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_options() {
        let cells: Vec<CellObs> = (0..20).map(|i| CellObs { n: i, e: 1.0 }).collect();
        let bad = GeneralGammaOptions { dirichlet_alpha: 1.0, ..Default::default() };
        assert!(fit_general_gamma_cells(&cells, &bad).is_err());
        let bad = GeneralGammaOptions { k: 1, ..Default::default() };
        assert!(fit_general_gamma_cells(&cells, &bad).is_err());
    }
}
