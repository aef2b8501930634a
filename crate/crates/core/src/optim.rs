//! Quasi-Newton minimisation (BFGS with Armijo backtracking).
//!
//! Only steps that lower the objective are accepted, so the recorded trace
//! is monotone.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the sup-norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease over an iteration falls below this.
    pub rel_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Minimise `f`, which returns the value and gradient. Non-finite values
/// are treated as `+inf`, which lets callers encode box constraints.
pub fn minimize<F>(f: F, x0: &[f64], opts: BfgsOptions) -> BfgsResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let eval = |x: &DVector<f64>| {
        let (v, g) = f(x.as_slice());
        if v.is_finite() && g.iter().all(|g| g.is_finite()) {
            (v, DVector::from_vec(g))
        } else {
            (f64::INFINITY, DVector::zeros(n))
        }
    };
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, mut g) = eval(&x);
    let mut trace = vec![fx];
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut iterations = 0;
    if !fx.is_finite() {
        return BfgsResult {
            x: x0.to_vec(),
            value: fx,
            iterations,
            converged,
            trace,
        };
    }
    let mut small_steps = 0;
    while iterations < opts.max_iter {
        if g.amax() < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = -g.norm_squared();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + t * &d;
            let (fn_, gn) = eval(&xn);
            if fn_ <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No decrease along the direction: flat to working precision.
            converged = g.amax() < opts.grad_tol.sqrt();
            break;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (rho * rho * yhy + rho) * &s * s.transpose() - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        let rel = (fx - fn_) / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        trace.push(fx);
        if rel < opts.rel_tol {
            small_steps += 1;
            if small_steps >= 3 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    BfgsResult {
        x: x.as_slice().to_vec(),
        value: fx,
        iterations,
        converged,
        trace,
    }
}
