//! Limited-memory BFGS for smooth unconstrained convex problems.
//!
//! Backtracking line search on the Armijo condition, with the approximate
//! Armijo test of Hager and Zhang as a fallback once the objective change
//! drops to rounding level; without it the iteration stalls near `1e-8`
//! gradient norms because `f` cannot resolve the decrease.

use std::collections::VecDeque;

use crate::scalar::{dot, inf_norm};
use crate::Scalar;

#[derive(Clone, Debug)]
pub struct Lbfgs<T> {
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Stop once `‖∇f‖∞` is at or below this.
    pub grad_tol: T,
    pub max_iter: usize,
    pub armijo: T,
    pub max_backtracks: usize,
}

impl<T: Scalar> Default for Lbfgs<T> {
    fn default() -> Self {
        Self {
            memory: 10,
            grad_tol: T::c(1e-8),
            max_iter: 5000,
            armijo: T::c(1e-4),
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    /// `‖∇f(x)‖∞` at the returned point.
    pub grad_norm: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl<T: Scalar> Lbfgs<T> {
    pub fn with_tolerance(grad_tol: T, max_iter: usize) -> Self {
        Self {
            grad_tol,
            max_iter,
            ..Self::default()
        }
    }

    /// Minimizes `f`, which returns the value and writes the gradient into
    /// its second argument.
    pub fn minimize<F>(&self, mut f: F, x0: Vec<T>) -> Minimum<T>
    where
        F: FnMut(&[T], &mut [T]) -> T,
    {
        let n = x0.len();
        let mut x = x0;
        let mut g = vec![T::zero(); n];
        let mut fx = f(&x, &mut g);
        let mut evaluations = 1;
        let mut hist: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(self.memory);
        let mut d = vec![T::zero(); n];
        let mut x_new = vec![T::zero(); n];
        let mut g_new = vec![T::zero(); n];
        let mut alpha_buf = vec![T::zero(); self.memory];
        let eps = T::epsilon();

        let mut iterations = 0;
        let mut gnorm = inf_norm(&g);
        if !fx.is_finite() || n == 0 {
            return Minimum {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations,
                evaluations,
                converged: n == 0 && fx.is_finite(),
            };
        }
        while gnorm > self.grad_tol && iterations < self.max_iter {
            iterations += 1;
            self.direction(&g, &hist, &mut d, &mut alpha_buf);
            let mut slope = dot(&g, &d);
            if !(slope < T::zero()) {
                hist.clear();
                for (di, &gi) in d.iter_mut().zip(&g) {
                    *di = -gi;
                }
                slope = dot(&g, &d);
            }
            let mut step = if hist.is_empty() {
                T::one().min(T::one() / gnorm)
            } else {
                T::one()
            };

            let mut accepted = false;
            for _ in 0..self.max_backtracks {
                for i in 0..n {
                    x_new[i] = x[i] + step * d[i];
                }
                let f_new = f(&x_new, &mut g_new);
                evaluations += 1;
                if f_new.is_finite() {
                    let armijo = f_new <= fx + self.armijo * step * slope;
                    let approx = f_new <= fx + T::c(16.0) * eps * fx.abs() && inf_norm(&g_new) < gnorm;
                    if armijo || approx {
                        accepted = true;
                        // curvature pair
                        let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
                        let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
                        let sy = dot(&s, &y);
                        if sy > eps * dot(&y, &y) {
                            if hist.len() == self.memory {
                                hist.pop_front();
                            }
                            hist.push_back((s, y, T::one() / sy));
                        }
                        std::mem::swap(&mut x, &mut x_new);
                        std::mem::swap(&mut g, &mut g_new);
                        fx = f_new;
                        break;
                    }
                }
                step *= T::c(0.5);
            }
            if !accepted {
                if hist.is_empty() {
                    break;
                }
                // retry from steepest descent
                hist.clear();
                continue;
            }
            gnorm = inf_norm(&g);
        }
        Minimum {
            x,
            value: fx,
            grad_norm: gnorm,
            iterations,
            evaluations,
            converged: gnorm <= self.grad_tol,
        }
    }

    /// Two-loop recursion: `d = -H g`.
    fn direction(&self, g: &[T], hist: &VecDeque<(Vec<T>, Vec<T>, T)>, d: &mut [T], alpha: &mut [T]) {
        for (di, &gi) in d.iter_mut().zip(g) {
            *di = -gi;
        }
        for (i, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = *rho * dot(s, d);
            alpha[i] = a;
            for (di, &yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            for di in d.iter_mut() {
                *di *= gamma;
            }
        }
        for (i, (s, y, rho)) in hist.iter().enumerate() {
            let b = *rho * dot(y, d);
            for (di, &si) in d.iter_mut().zip(s) {
                *di += (alpha[i] - b) * si;
            }
        }
    }
}
