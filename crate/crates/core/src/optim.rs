//! Damped Newton maximization for small smooth objectives.

use nalgebra::{DMatrix, DVector};

/// Objective value, gradient and Hessian at a point.
pub struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Coordinates held at their starting value.
    pub fixed: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl NewtonOptions {
    pub fn new(n: usize) -> Self {
        NewtonOptions {
            grad_tol: 1e-6,
            max_iter: 500,
            fixed: vec![false; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient norm: components pushing against an active bound or
/// belonging to fixed coordinates are ignored.
fn free_grad_norm(x: &[f64], g: &[f64], opts: &NewtonOptions) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        if opts.fixed[i] {
            continue;
        }
        if x[i] <= opts.lower[i] && g[i] < 0.0 || x[i] >= opts.upper[i] && g[i] > 0.0 {
            continue;
        }
        m = m.max(g[i].abs());
    }
    m
}

/// Maximizes `f` from `x0` with a Levenberg-damped Newton iteration. A step is
/// accepted only when it raises the objective, so the returned value is never
/// below the starting value.
pub fn maximize<F>(f: F, x0: &[f64], opts: &NewtonOptions) -> NewtonResult
where
    F: Fn(&[f64]) -> Eval,
{
    let n = x0.len();
    let mut x: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, &v)| v.clamp(opts.lower[i], opts.upper[i]))
        .collect();
    let mut cur = f(&x);
    let mut damping = 1e-8;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let gnorm = free_grad_norm(&x, &cur.grad, opts);
        if gnorm < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|&i| !opts.fixed[i]).collect();
        let m = free.len();
        let g = DVector::from_iterator(m, free.iter().map(|&i| cur.grad[i]));
        let neg_h = DMatrix::from_fn(m, m, |a, b| -cur.hess[free[a]][free[b]]);
        let scale: f64 = (0..m).map(|i| neg_h[(i, i)].abs()).fold(1.0, f64::max);
        let mut accepted = false;
        while damping < 1e12 {
            let mut a = neg_h.clone();
            for i in 0..m {
                a[(i, i)] += damping * scale;
            }
            let Some(chol) = a.cholesky() else {
                damping = (damping * 10.0).max(1e-6);
                continue;
            };
            let step = chol.solve(&g);
            let mut trial = x.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] = (x[i] + step[k]).clamp(opts.lower[i], opts.upper[i]);
            }
            let next = f(&trial);
            if next.value.is_finite() && next.value >= cur.value {
                let moved = trial.iter().zip(&x).any(|(a, b)| a != b);
                x = trial;
                cur = next;
                damping = (damping / 10.0).max(1e-12);
                accepted = moved;
                break;
            }
            damping = (damping * 10.0).max(1e-6);
        }
        if !accepted {
            // No ascent step exists at any damping level: a numerical optimum.
            converged = free_grad_norm(&x, &cur.grad, opts) < opts.grad_tol.sqrt();
            break;
        }
    }
    let grad_norm = free_grad_norm(&x, &cur.grad, opts);
    NewtonResult {
        x,
        value: cur.value,
        grad_norm,
        iterations,
        converged: converged || grad_norm < opts.grad_tol,
    }
}
