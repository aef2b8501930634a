//! Exponential-family prior on a grid with a natural-spline log density.
//!
//! Masses are `g(α) = exp(Qα - φ(α))` where the columns of `Q` are a natural
//! cubic spline basis in `log v` (intercept dropped, columns centred and
//! scaled to unit length). `α` maximises the penalised marginal
//! log-likelihood `ℓ(α) - c0 ‖α‖` by Newton (Fisher-scoring type) steps with
//! a backtracking line search. The penalty is not differentiable at 0, so
//! that point is handled through its subgradient: `α̂ = 0` exactly when
//! `‖∇ℓ(0)‖ ≤ c0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::grid::quantile;
use super::km::{check_support, scaled_likelihood};
use super::{cells_from_table, usable_cells, CellObs, FitInfo, FittedPrior, MixturePrior};
use crate::error::{Error, Result};
use crate::table::{BaselineMatrix, ContingencyTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfronPrior {
    pub support: Vec<f64>,
    /// Coefficients `α`.
    pub coefficients: Vec<f64>,
    /// Structure matrix `Q`, one row per support point.
    pub structure_matrix: Vec<Vec<f64>>,
    pub c0: f64,
    pub spline_df: usize,
    /// `φ(α) = log Σ_k exp((Qα)_k)`.
    pub normalizer: f64,
    pub masses: Vec<f64>,
}

impl EfronPrior {
    pub fn to_mixture(&self) -> MixturePrior {
        MixturePrior::discrete(self.support.clone(), self.masses.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfronFit {
    pub prior: EfronPrior,
    pub fit: FitInfo,
}

impl EfronFit {
    /// The fitted masses as a discrete [`FittedPrior`].
    pub fn to_fitted(&self) -> FittedPrior {
        FittedPrior {
            prior: self.prior.to_mixture(),
            fit: self.fit.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfronOptions {
    pub c0: f64,
    pub p: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for EfronOptions {
    fn default() -> Self {
        Self {
            c0: 1.0,
            p: 5,
            max_iter: 200,
            grad_tol: 1e-6,
        }
    }
}

/// Natural cubic spline basis at `x` with `p` non-constant columns and
/// `p + 1` knots: the extremes of `x` and its `j/p` quantiles.
fn spline_basis(x: &[f64], p: usize) -> Result<DMatrix<f64>> {
    let k = x.len();
    let knots: Vec<f64> = (0..=p).map(|j| quantile(x, j as f64 / p as f64)).collect();
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("support too coarse for distinct spline knots".into()));
    }
    let m = knots.len();
    let last = knots[m - 1];
    let cube = |t: f64| if t > 0.0 { t * t * t } else { 0.0 };
    let d = |j: usize, t: f64| (cube(t - knots[j]) - cube(t - last)) / (last - knots[j]);
    let mut q = DMatrix::zeros(k, p);
    for (r, &t) in x.iter().enumerate() {
        q[(r, 0)] = t;
        for j in 0..m - 2 {
            q[(r, j + 1)] = d(j, t) - d(m - 2, t);
        }
    }
    for mut col in q.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        if norm <= 0.0 {
            return Err(Error::InvalidArgument("degenerate spline column".into()));
        }
        col /= norm;
    }
    Ok(q)
}

fn softmax(eta: &DVector<f64>) -> (DVector<f64>, f64) {
    let m = eta.max();
    let s: f64 = eta.iter().map(|&e| (e - m).exp()).sum();
    let phi = m + s.ln();
    (eta.map(|e| (e - phi).exp()), phi)
}

/// Scaled likelihood matrix and the pieces needed for likelihood, gradient
/// and Hessian.
struct Problem {
    /// `C × K`, rows scaled to a maximum of 1.
    p: DMatrix<f64>,
    offset: f64,
    q: DMatrix<f64>,
    c0: f64,
}

struct Eval {
    loglik: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    g: DVector<f64>,
    phi: f64,
}

impl Problem {
    fn loglik(&self, alpha: &DVector<f64>) -> f64 {
        let (g, _) = softmax(&(&self.q * alpha));
        let f = &self.p * &g;
        self.offset + f.iter().map(|x| x.ln()).sum::<f64>()
    }

    fn objective(&self, alpha: &DVector<f64>) -> f64 {
        self.loglik(alpha) - self.c0 * alpha.norm()
    }

    /// Unpenalised log-likelihood with gradient and Hessian in `α`.
    fn eval(&self, alpha: &DVector<f64>) -> Eval {
        let (g, phi) = softmax(&(&self.q * alpha));
        let f = &self.p * &g;
        let n = self.p.nrows() as f64;
        // a_ck = P_ck g_k / f_c
        let mut a = self.p.clone();
        for (c, mut row) in a.row_iter_mut().enumerate() {
            for (k, x) in row.iter_mut().enumerate() {
                *x *= g[k] / f[c];
            }
        }
        let s = DVector::from_iterator(a.ncols(), a.column_iter().map(|col| col.sum()));
        let b = &a * &self.q;
        let qg = self.q.transpose() * &g;
        let grad = self.q.transpose() * (&s - n * &g);
        let qsq = self.q.transpose() * DMatrix::from_diagonal(&s) * &self.q;
        let qgq = self.q.transpose() * DMatrix::from_diagonal(&g) * &self.q;
        let hess = qsq - b.transpose() * &b - n * (qgq - &qg * qg.transpose());
        Eval {
            loglik: self.offset + f.iter().map(|x| x.ln()).sum::<f64>(),
            grad,
            hess,
            g,
            phi,
        }
    }

    /// Gradient and Hessian of the penalty term at `α ≠ 0`.
    fn penalty_derivs(&self, alpha: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let norm = alpha.norm();
        let u = alpha / norm;
        let dim = alpha.len();
        let h = -(self.c0 / norm) * (DMatrix::identity(dim, dim) - &u * u.transpose());
        (-self.c0 * u, h)
    }
}

/// Solve `(-H) d = g` for a negative definite `H`, adding a growing ridge
/// when the Cholesky factorisation fails.
fn ascent_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let neg = -h;
    if let Some(ch) = neg.clone().cholesky() {
        return Some(ch.solve(g));
    }
    let scale = neg.diagonal().amax().max(1.0);
    let mut mu = 1e-8 * scale;
    for _ in 0..25 {
        let boosted = &neg + mu * DMatrix::identity(neg.nrows(), neg.ncols());
        if let Some(ch) = boosted.cholesky() {
            return Some(ch.solve(g));
        }
        mu *= 10.0;
    }
    None
}

pub fn fit_efron(table: &ContingencyTable, baseline: &BaselineMatrix, support: &[f64], opts: &EfronOptions) -> Result<EfronFit> {
    fit_efron_cells(&cells_from_table(table, baseline)?, support, opts)
}

fn problem(cells: &[CellObs], support: &[f64], opts: &EfronOptions) -> Result<Problem> {
    check_support(support)?;
    if opts.p < 2 {
        return Err(Error::InvalidArgument("spline degrees of freedom must be at least 2".into()));
    }
    if !(opts.c0 > 0.0) {
        return Err(Error::InvalidArgument("penalty c0 must be positive".into()));
    }
    if support.len() <= opts.p {
        return Err(Error::InvalidArgument(format!("support of size {} needs more than p = {} points", support.len(), opts.p)));
    }
    let cells = usable_cells(cells, 1, "Efron fit")?;
    let x: Vec<f64> = support.iter().map(|v| v.ln()).collect();
    let q = spline_basis(&x, opts.p)?;
    let (p, offset) = scaled_likelihood(&cells, support);
    Ok(Problem {
        p: DMatrix::from_row_slice(cells.len(), support.len(), &p),
        offset,
        q,
        c0: opts.c0,
    })
}

pub fn fit_efron_cells(cells: &[CellObs], support: &[f64], opts: &EfronOptions) -> Result<EfronFit> {
    let prob = problem(cells, support, opts)?;
    let dim = opts.p;
    let mut alpha = DVector::zeros(dim);
    let mut trace = vec![prob.objective(&alpha)];
    let mut iterations = 0;
    let mut converged = false;
    let mut notes = Vec::new();

    let at_zero = prob.eval(&alpha);
    let gnorm = at_zero.grad.norm();
    if gnorm <= opts.c0 {
        converged = true;
        notes.push("subgradient condition holds at 0; prior is uniform on the support".into());
    } else {
        // Leave 0 along the steepest ascent direction, with a step from the
        // local quadratic model.
        let u = &at_zero.grad / gnorm;
        let curv = -(u.transpose() * &at_zero.hess * &u)[(0, 0)];
        let mut t = if curv > 0.0 { (gnorm - opts.c0) / curv } else { 1.0 };
        let f0 = trace[0];
        for _ in 0..60 {
            let cand = t * &u;
            let f = prob.objective(&cand);
            if f > f0 {
                alpha = cand;
                trace.push(f);
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        while iterations < opts.max_iter {
            if alpha.norm() == 0.0 {
                notes.push("iterate returned to 0".into());
                break;
            }
            let ev = prob.eval(&alpha);
            let (pg, ph) = prob.penalty_derivs(&alpha);
            let grad = &ev.grad + pg;
            if grad.norm() < opts.grad_tol {
                converged = true;
                break;
            }
            let h = &ev.hess + ph;
            let d = ascent_direction(&h, &grad)
                .ok_or_else(|| Error::FitFailure(format!("singular scoring step at iteration {iterations}, even with a ridge")))?;
            let f0 = *trace.last().expect("non-empty");
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                let cand = &alpha + t * &d;
                let f = prob.objective(&cand);
                if f >= f0 {
                    alpha = cand;
                    trace.push(f);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            if !accepted {
                // Flat to working precision along the Newton direction.
                converged = grad.norm() < opts.grad_tol.sqrt();
                notes.push(format!("line search stalled with gradient norm {:e}", grad.norm()));
                break;
            }
        }
    }
    if !converged && notes.is_empty() {
        notes.push(format!("stopped at the iteration limit {}", opts.max_iter));
    }
    let ev = prob.eval(&alpha);
    let structure_matrix = prob.q.row_iter().map(|r| r.iter().copied().collect()).collect();
    let objective = prob.objective(&alpha);
    Ok(EfronFit {
        prior: EfronPrior {
            support: support.to_vec(),
            coefficients: alpha.iter().copied().collect(),
            structure_matrix,
            c0: opts.c0,
            spline_df: opts.p,
            normalizer: ev.phi,
            masses: ev.g.iter().copied().collect(),
        },
        fit: FitInfo {
            method: "efron".into(),
            iterations,
            converged,
            objective,
            log_likelihood: ev.loglik,
            tolerance: opts.grad_tol,
            max_iter: opts.max_iter,
            notes,
            trace,
        },
    })
}

/// `2 tr(F) - 2 ℓ(α̂)` with `F = H_pen⁻¹ H_0`; the trace is 0 when `α̂ = 0`.
pub fn efron_aic(fit: &EfronFit, cells: &[CellObs]) -> Result<f64> {
    let opts = EfronOptions {
        c0: fit.prior.c0,
        p: fit.prior.spline_df,
        ..Default::default()
    };
    let prob = problem(cells, &fit.prior.support, &opts)?;
    let alpha = DVector::from_column_slice(&fit.prior.coefficients);
    let ev = prob.eval(&alpha);
    if alpha.norm() == 0.0 {
        return Ok(-2.0 * ev.loglik);
    }
    let (_, ph) = prob.penalty_derivs(&alpha);
    let h_pen = &ev.hess + ph;
    let inv = h_pen
        .try_inverse()
        .ok_or_else(|| Error::AicFailure("penalised Hessian is not invertible".into()))?;
    let f = inv * &ev.hess;
    let tr = f.trace();
    if !tr.is_finite() {
        return Err(Error::AicFailure("degrees-of-freedom trace is not finite".into()));
    }
    Ok(2.0 * tr - 2.0 * ev.loglik)
}

/// AIC over a grid of `(c0, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfronSelection {
    pub best: EfronFit,
    pub aic: f64,
    /// `(c0, p, AIC)` for every grid point; `None` where the fit failed.
    pub scores: Vec<(f64, usize, Option<f64>)>,
}

pub const C0_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];
pub const P_GRID: [usize; 6] = [3, 4, 5, 6, 7, 8];

/// Fit every `(c0, p)` pair and keep the minimum-AIC fit. Ties go to the
/// earlier grid point (c0-major order).
pub fn select_efron(cells: &[CellObs], support: &[f64], c0_grid: &[f64], p_grid: &[usize]) -> Result<EfronSelection> {
    let mut best: Option<(EfronFit, f64)> = None;
    let mut scores = Vec::new();
    let mut last_err = None;
    for &c0 in c0_grid {
        for &p in p_grid {
            let opts = EfronOptions { c0, p, ..Default::default() };
            let res = fit_efron_cells(cells, support, &opts).and_then(|fit| efron_aic(&fit, cells).map(|aic| (fit, aic)));
            match res {
                Ok((fit, aic)) => {
                    scores.push((c0, p, Some(aic)));
                    if best.as_ref().is_none_or(|(_, b)| aic < *b) {
                        best = Some((fit, aic));
                    }
                }
                Err(e) => {
                    scores.push((c0, p, None));
                    last_err = Some(e);
                }
            }
        }
    }
    let (best, aic) = best.ok_or_else(|| last_err.unwrap_or_else(|| Error::InvalidArgument("empty hyperparameter grid".into())))?;
    Ok(EfronSelection { best, aic, scores })
}
