//! Smooth unconstrained maximization (BFGS with backtracking) and
//! finite-difference derivative tooling.

use crate::linalg::{dot, invert, max_abs, Matrix};
use crate::prelude::*;
use crate::{Error, Result};

/// An objective to maximize, with an optional analytic gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Analytic gradient, or `None` to fall back on central differences.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Value and gradient together; override when sharing work is cheaper.
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let f = self.value(x);
        let g = self.gradient(x).unwrap_or_else(|| finite_diff_grad(|y| self.value(y), x, 1e-6));
        (f, g)
    }
}

/// Closure-backed problem.
pub struct FnProblem<F, G> {
    pub dim: usize,
    pub objective: F,
    pub gradient: Option<G>,
}

impl<F: Fn(&[f64]) -> f64> FnProblem<F, fn(&[f64]) -> Vec<f64>> {
    pub fn without_gradient(dim: usize, objective: F) -> Self {
        FnProblem { dim, objective, gradient: None }
    }
}

impl<F, G> Objective for FnProblem<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.objective)(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    pub max_iters: usize,
    /// Converged when `max|g| <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    /// Stop (unconverged) when a step moves `x` by less than this, relatively.
    pub step_tol: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions { max_iters: 500, grad_tol: 1e-6, step_tol: 1e-14 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub n_iters: usize,
    pub converged: bool,
    /// Max-norm of the gradient at `x_star`.
    pub grad_norm: f64,
    /// `(iteration, f, grad_norm)` for every accepted iterate.
    pub trace: Vec<(usize, f64, f64)>,
}

const ARMIJO_C: f64 = 1e-4;
const CONTRACTION: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Maximizes `p` from `x0` with BFGS on the inverse Hessian and a backtracking
/// line search enforcing sufficient increase.
pub fn maximize(p: &dyn Objective, x0: &[f64], opts: &OptOptions) -> Result<OptResult> {
    let n = p.dim();
    if x0.len() != n {
        return Err(Error::arg(format!("start point has length {}, expected {n}", x0.len())));
    }
    let mut x = x0.to_vec();
    let (mut f, mut g) = p.value_and_gradient(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("objective is not finite at the start point".into()));
    }
    // inverse Hessian of -f (positive definite)
    let mut h = Matrix::identity(n);
    let mut trace = vec![(0, f, max_abs(&g))];
    let mut iters = 0;
    let mut converged = max_abs(&g) <= opts.grad_tol * (1.0 + f.abs());

    while !converged && iters < opts.max_iters {
        iters += 1;
        // ascent direction d = H g
        let mut d = h.mul_vec(&g);
        let mut slope = dot(&g, &d);
        if !(slope > 0.0) {
            h = Matrix::identity(n);
            d = g.clone();
            slope = dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let ft = p.value(&trial);
            if ft.is_finite() && ft >= f + ARMIJO_C * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= CONTRACTION;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let (_, g_new) = p.value_and_gradient(&x_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            break;
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        // gradient change of the minimized function -f
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let moved = max_abs(&s) <= opts.step_tol * (1.0 + max_abs(&x));
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push((iters, f, max_abs(&g)));
        converged = max_abs(&g) <= opts.grad_tol * (1.0 + f.abs());
        if converged || moved {
            break;
        }
        if sy > 1e-12 * crate::linalg::norm2(&s) * crate::linalg::norm2(&y) {
            if iters == 1 {
                // Shanno-Phua scaling of the initial matrix
                let yy = dot(&y, &y);
                h = Matrix::identity(n);
                h.scale(sy / yy);
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    let grad_norm = max_abs(&g);
    Ok(OptResult { x_star: x, f_star: f, n_iters: iters, converged, grad_norm, trace })
}

fn bfgs_update(h: &mut Matrix, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = h.mul_vec(y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            let v = h.get(i, j) - rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
            h.set(i, j, v);
        }
    }
}

/// Central-difference gradient with a fixed step.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|j| {
            work[j] = x[j] + h;
            let up = f(&work);
            work[j] = x[j] - h;
            let down = f(&work);
            work[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Max over components of `|analytic - numeric| / max(1, |numeric|)`, with
/// per-component step `h_scale * max(1, |x_j|)`.
pub fn gradient_error(p: &dyn Objective, x: &[f64], h_scale: f64) -> Result<f64> {
    let analytic = p.gradient(x).ok_or_else(|| Error::arg("problem has no analytic gradient to check"))?;
    let mut work = x.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let h = h_scale * x[j].abs().max(1.0);
        work[j] = x[j] + h;
        let up = p.value(&work);
        work[j] = x[j] - h;
        let down = p.value(&work);
        work[j] = x[j];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((analytic[j] - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}

/// Gradient check with the default step `1e-6 * max(1, |x_j|)`.
pub fn check_gradient(p: &dyn Objective, x: &[f64]) -> Result<f64> {
    gradient_error(p, x, 1e-6)
}

/// Symmetric Hessian by central differences of the gradient (analytic when
/// available).
pub fn hessian(p: &dyn Objective, x: &[f64]) -> Matrix {
    let n = x.len();
    let mut hm = Matrix::zeros(n, n);
    let mut work = x.to_vec();
    for j in 0..n {
        let h = 1e-5 * x[j].abs().max(1.0);
        work[j] = x[j] + h;
        let (_, up) = p.value_and_gradient(&work);
        work[j] = x[j] - h;
        let (_, down) = p.value_and_gradient(&work);
        work[j] = x[j];
        for i in 0..n {
            hm.set(i, j, (up[i] - down[i]) / (2.0 * h));
        }
    }
    hm.symmetrize();
    hm
}

/// Covariance `(-H)^{-1}` at a maximum.
pub fn covariance_at_max(p: &dyn Objective, x: &[f64]) -> Result<Matrix> {
    let mut info = hessian(p, x);
    info.scale(-1.0);
    invert(&info)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> impl Objective {
        FnProblem {
            dim: 2,
            objective: |x: &[f64]| -x[0] * x[0] - 10.0 * x[1] * x[1],
            gradient: Some(|x: &[f64]| vec![-2.0 * x[0], -20.0 * x[1]]),
        }
    }

    #[test]
    fn one_dimensional_quadratic() {
        let p = FnProblem::without_gradient(1, |x: &[f64]| -(x[0] - 3.0) * (x[0] - 3.0));
        let r = maximize(&p, &[0.0], &OptOptions::default()).unwrap();
        assert!((r.x_star[0] - 3.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn anisotropic_quadratic() {
        let r = maximize(&quad(), &[5.0, 5.0], &OptOptions::default()).unwrap();
        assert!(r.x_star.iter().all(|v| v.abs() < 1e-6), "{:?}", r.x_star);
        assert!(r.converged && r.grad_norm <= 1e-6 * (1.0 + r.f_star.abs()));
    }

    #[test]
    fn accepted_steps_never_decrease() {
        let p =
            FnProblem::without_gradient(2, |x: &[f64]| -(1.0 - x[0]).powi(2) - 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let r = maximize(&p, &[-1.2, 1.0], &OptOptions { max_iters: 2000, ..Default::default() }).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        assert!((r.x_star[0] - 1.0).abs() < 1e-4 && (r.x_star[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let p = FnProblem::without_gradient(1, |x: &[f64]| x[0].ln());
        assert!(maximize(&p, &[-1.0], &OptOptions::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let a = maximize(&quad(), &[3.0, -2.0], &OptOptions::default()).unwrap();
        let b = maximize(&quad(), &[3.0, -2.0], &OptOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn finite_difference_analytic_cases() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[2.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        let g = finite_diff_grad(|x| x[0].sin(), &[0.0], 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gradient_check_catches_sign_flip() {
        assert!(check_gradient(&quad(), &[1.3, -0.7]).unwrap() < 1e-5);
        let bad = FnProblem {
            dim: 2,
            objective: |x: &[f64]| -x[0] * x[0] - 10.0 * x[1] * x[1],
            gradient: Some(|x: &[f64]| vec![-2.0 * x[0], 20.0 * x[1]]),
        };
        assert!(check_gradient(&bad, &[1.3, -0.7]).unwrap() > 0.1);
    }

    #[test]
    fn positive_definite_quadratics_converge_fast() {
        use rand::Rng;
        let mut r = crate::rng::stream(5, &[]);
        for dim in 1..=10 {
            // A = B^T B + I
            let b: Vec<f64> = (0..dim * dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let mut a = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    a[i * dim + j] =
                        (0..dim).map(|k| b[k * dim + i] * b[k * dim + j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
                }
            }
            let c: Vec<f64> = (0..dim).map(|_| r.random_range(-3.0..3.0)).collect();
            let a2 = a.clone();
            let c2 = c.clone();
            let p = FnProblem {
                dim,
                objective: move |x: &[f64]| {
                    let mut v = dot(&c, x);
                    for i in 0..dim {
                        for j in 0..dim {
                            v -= 0.5 * x[i] * a[i * dim + j] * x[j];
                        }
                    }
                    v
                },
                gradient: Some(move |x: &[f64]| {
                    (0..dim).map(|i| c2[i] - (0..dim).map(|j| a2[i * dim + j] * x[j]).sum::<f64>()).collect()
                }),
            };
            let opts = OptOptions { max_iters: 50, grad_tol: 1e-8, step_tol: 0.0 };
            let res = maximize(&p, &vec![0.0; dim], &opts).unwrap();
            assert!(res.converged, "dim {dim}: {} iters, grad {}", res.n_iters, res.grad_norm);
            assert!(res.n_iters <= 50);
        }
    }

    #[test]
    fn hessian_of_quadratic() {
        let h = hessian(&quad(), &[0.3, 0.1]);
        assert!((h.get(0, 0) + 2.0).abs() < 1e-6);
        assert!((h.get(1, 1) + 20.0).abs() < 1e-6);
        assert!(h.get(0, 1).abs() < 1e-6);
    }
}
