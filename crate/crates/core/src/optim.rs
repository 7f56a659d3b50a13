//! Small unconstrained minimizers: BFGS for cheap low-dimensional objectives
//! and damped Newton for smooth convex ones with an exact Hessian.
//!
//! Both use Armijo backtracking, so the objective never increases between
//! iterates.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    /// Stop once the gradient max-norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, g| m.max(g.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton decrement below which line-search failure is attributed to
/// rounding.
const ROUNDING_DECREMENT: f64 = 1e-13;

/// Backtracks from a unit step along `dir`. Returns the accepted point and
/// its value, or `None` when no decrease is found.
fn armijo<F>(f: &F, x: &[f64], fx: f64, g: &[f64], dir: &[f64]) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let slope = dot(g, dir);
    if !(slope < 0.0) {
        return None;
    }
    let mut step = 1.0;
    for _ in 0..MAX_HALVINGS {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + step * di).collect();
        if trial == x {
            // The step no longer moves the point; a "decrease" here is noise.
            return None;
        }
        let ft = f(&trial);
        if ft.is_finite() && ft <= fx + ARMIJO_C * step * slope {
            return Some((trial, ft));
        }
        step *= 0.5;
    }
    None
}

/// BFGS with an inverse-Hessian update. `fg` returns the value and writes
/// the gradient.
pub fn bfgs<F>(fg: F, x0: &[f64], opts: Options) -> Minimum
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let value_only = |x: &[f64]| fg(x, &mut vec![0.0; n]);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = fg(&x, &mut g);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![fx];
    let mut iterations = 0;
    while iterations < opts.max_iter && max_norm(&g) >= opts.grad_tol {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut dir: Vec<f64> = (-(&h_inv * &gv)).iter().copied().collect();
        let accepted = armijo(&value_only, &x, fx, &g, &dir).or_else(|| {
            // Curvature estimate went bad: restart from steepest descent.
            h_inv = DMatrix::identity(n, n);
            dir = g.iter().map(|v| -v).collect();
            armijo(&value_only, &x, fx, &g, &dir)
        });
        let Some((x_new, _)) = accepted else { break };
        let mut g_new = vec![0.0; n];
        let f_new = fg(&x_new, &mut g_new);
        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            h_inv = &left * &h_inv * &right + rho * &s * s.transpose();
        }
        x = x_new;
        g = g_new;
        fx = f_new;
        trace.push(fx);
    }
    let grad_norm = max_norm(&g);
    Minimum {
        x,
        value: fx,
        grad_norm,
        iterations,
        converged: grad_norm < opts.grad_tol,
        trace,
    }
}

/// Value, gradient and Hessian at a point.
pub struct Derivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Damped Newton for convex objectives. The Newton system is solved by
/// Cholesky; if the Hessian is not numerically positive definite a growing
/// multiple of the identity is added. `value` evaluates the objective alone
/// for the line search.
pub fn newton<D, V>(derivs: D, value: V, x0: &[f64], opts: Options) -> Minimum
where
    D: Fn(&[f64]) -> Derivatives,
    V: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut d = derivs(&x);
    let mut trace = vec![d.value];
    let mut iterations = 0;
    while iterations < opts.max_iter && max_norm(&d.gradient) >= opts.grad_tol {
        iterations += 1;
        let g = DVector::from_column_slice(&d.gradient);
        let scale = d.hessian.diagonal().amax().max(1e-300);
        let mut damping = 0.0;
        let dir = loop {
            let mut h = d.hessian.clone();
            for i in 0..n {
                h[(i, i)] += damping;
            }
            if let Some(ch) = h.cholesky() {
                break Some(-ch.solve(&g));
            }
            damping = if damping == 0.0 { 1e-10 * scale } else { damping * 10.0 };
            if damping > 1e10 * scale {
                break None;
            }
        };
        let Some(dir) = dir else { break };
        let dir: Vec<f64> = dir.iter().copied().collect();
        x = match armijo(&value, &x, d.value, &d.gradient, &dir) {
            Some((x_new, _)) => x_new,
            // Near the optimum the predicted decrease can fall below the
            // objective's rounding error; the full Newton step is then safe.
            None if -dot(&d.gradient, &dir) <= ROUNDING_DECREMENT * (1.0 + d.value.abs()) => {
                x.iter().zip(&dir).map(|(xi, di)| xi + di).collect()
            }
            None => break,
        };
        d = derivs(&x);
        trace.push(d.value);
    }
    let grad_norm = max_norm(&d.gradient);
    Minimum {
        x,
        value: d.value,
        grad_norm,
        iterations,
        converged: grad_norm < opts.grad_tol,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let m = bfgs(rosenbrock, &[-1.2, 1.0], Options::default());
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn newton_solves_quadratic_in_one_step() {
        // f = 0.5 x'Ax - b'x with A = [[3,1],[1,2]], b = [1, 1].
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let value = |x: &[f64]| {
            let x = DVector::from_column_slice(x);
            0.5 * x.dot(&(&a * &x)) - b.dot(&x)
        };
        let derivs = |x: &[f64]| {
            let xv = DVector::from_column_slice(x);
            Derivatives {
                value: value(x),
                gradient: (&a * &xv - &b).iter().copied().collect(),
                hessian: a.clone(),
            }
        };
        let m = newton(derivs, value, &[5.0, -5.0], Options::default());
        assert!(m.converged);
        assert_eq!(m.iterations, 1);
        assert!((m.x[0] - 0.2).abs() < 1e-12 && (m.x[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let m = bfgs(rosenbrock, &[-1.2, 1.0], Options { grad_tol: 1e-8, max_iter: 3 });
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }
}
