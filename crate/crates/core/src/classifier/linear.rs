use serde::{Deserialize, Serialize};

use super::{check_dim, Posterior, SolverReport};
use crate::optim::Lbfgs;
use crate::scalar::{dot, logistic, logit_to_pair, norm_sq, softplus};
use crate::{Error, LabeledDataset, Result, Scalar};

/// `q̂(+1|x) = σ(wᵀx + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct LinearLogReg<T> {
    pub dim: usize,
    pub weights: Vec<T>,
    pub intercept: T,
    pub l2: T,
}

#[derive(Clone, Debug)]
pub struct LogRegOptions<T> {
    /// Penalty `l2 · ‖w‖²`; the intercept is not penalized.
    pub l2: T,
    pub grad_tol: T,
    pub max_iter: usize,
    /// Starting point `[w; b]`, zero when absent.
    pub init: Option<Vec<T>>,
}

impl<T: Scalar> Default for LogRegOptions<T> {
    fn default() -> Self {
        Self {
            l2: T::c(1e-4),
            grad_tol: T::c(1e-8),
            max_iter: 5000,
            init: None,
        }
    }
}

impl<T: Scalar> LogRegOptions<T> {
    pub fn with_l2(l2: T) -> Self {
        Self { l2, ..Self::default() }
    }
}

impl<T: Scalar> LinearLogReg<T> {
    pub fn new(weights: Vec<T>, intercept: T, l2: T) -> Self {
        Self {
            dim: weights.len(),
            weights,
            intercept,
            l2,
        }
    }

    pub fn logit(&self, x: &[T]) -> Result<T> {
        check_dim(self.dim, x.len())?;
        Ok(dot(&self.weights, x) + self.intercept)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.weights.len() != self.dim {
            return Err(Error::InvalidParameter("weights length differs from dim".into()));
        }
        if self.weights.iter().any(|v| !v.is_finite()) || !self.intercept.is_finite() {
            return Err(Error::NonFinite("logistic regression parameters"));
        }
        Ok(())
    }
}

impl<T: Scalar> Posterior<T> for LinearLogReg<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        Ok(logit_to_pair(self.logit(x)?))
    }
}

/// Mean logistic loss plus `l2 ‖w‖²` and its gradient with respect to
/// `params = [w; b]`.
pub(crate) fn logistic_objective<T: Scalar>(data: &LabeledDataset<T>, l2: T, params: &[T], grad: &mut [T]) -> T {
    let d = data.dim();
    let (w, b) = (&params[..d], params[d]);
    let inv_n = T::one() / T::from_count(data.len());
    grad.iter_mut().for_each(|g| *g = T::zero());
    let mut loss = T::zero();
    for s in data.iter() {
        let y: T = s.label.sign();
        let margin = y * (dot(w, s.features) + b);
        loss += softplus(-margin);
        let r = -y * logistic(-margin) * inv_n;
        for (g, &xv) in grad[..d].iter_mut().zip(s.features) {
            *g += r * xv;
        }
        grad[d] += r;
    }
    for (g, &wv) in grad[..d].iter_mut().zip(w) {
        *g += T::c(2.0) * l2 * wv;
    }
    loss * inv_n + l2 * norm_sq(w)
}

/// Regularized maximum-likelihood linear logistic regression.
///
/// `l2 = 0` is allowed but the optimum does not exist for separable data; the
/// fit then stops at the iteration cap and the report says so.
pub fn fit_logreg<T: Scalar>(
    data: &LabeledDataset<T>,
    opts: &LogRegOptions<T>,
) -> Result<(LinearLogReg<T>, SolverReport<T>)> {
    data.ensure_non_empty()?;
    if !(opts.l2 >= T::zero()) {
        return Err(Error::InvalidParameter("l2 must be >= 0".into()));
    }
    let d = data.dim();
    let x0 = match &opts.init {
        Some(v) if v.len() == d + 1 => v.clone(),
        Some(v) => {
            return Err(Error::DimensionMismatch {
                expected: d + 1,
                got: v.len(),
            })
        }
        None => vec![T::zero(); d + 1],
    };
    let solver = Lbfgs::with_tolerance(opts.grad_tol, opts.max_iter);
    let min = solver.minimize(|p, g| logistic_objective(data, opts.l2, p, g), x0);
    if !min.converged {
        log::warn!(
            "logistic regression stopped after {} iterations with gradient norm {}",
            min.iterations,
            min.grad_norm
        );
    }
    let model = LinearLogReg {
        dim: d,
        weights: min.x[..d].to_vec(),
        intercept: min.x[d],
        l2: opts.l2,
    };
    model.validate()?;
    Ok((
        model,
        SolverReport {
            objective: min.value,
            grad_norm: min.grad_norm,
            iterations: min.iterations,
            converged: min.converged,
        },
    ))
}

/// Picks the `l2` in `grid` with the best mean held-out log-likelihood over
/// `folds`-fold cross validation (row `i` goes to fold `i mod folds`). Ties
/// go to the larger penalty.
pub fn select_l2<T: Scalar>(data: &LabeledDataset<T>, grid: &[T], folds: usize) -> Result<T> {
    super::cv_select(data, grid, folds, |train, l2| {
        Ok(fit_logreg(train, &LogRegOptions::with_l2(l2))?.0)
    })
}
