//! Baselines: the joint parameter-decomposition model `β_p = θ + β_q`.
//!
//! ```text
//! min  NLL_P(θ + β_q) + γ · NLL_Q(β_q) + l2 (‖θ‖² + ‖β_q‖²)
//! ```
//!
//! with `NLL` the mean logistic loss of the model `σ(βᵀ[x; 1])`. Only the sum
//! `θ + β_q` enters the target term, so without `l2` the split is not
//! identifiable.

use serde::{Deserialize, Serialize};

use crate::classifier::{check_dim, Posterior, SolverReport};
use crate::optim::Lbfgs;
use crate::scalar::{dot, logistic, logit_to_pair, norm_sq, softplus};
use crate::{Error, LabeledDataset, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct JointModel<T> {
    /// Source parameters `[w; b]`.
    pub beta_q: Vec<T>,
    /// Target shift `[w; b]`.
    pub theta: Vec<T>,
    pub gamma: T,
    pub l2: T,
}

#[derive(Clone, Debug)]
pub struct JointOptions<T> {
    pub gamma: T,
    pub l2: T,
    pub grad_tol: T,
    pub max_iter: usize,
    /// Starting `[β_q; θ]`, zero when absent.
    pub init: Option<Vec<T>>,
}

impl<T: Scalar> JointOptions<T> {
    pub fn new(gamma: T) -> Self {
        Self {
            gamma,
            l2: T::c(1e-4),
            grad_tol: T::c(1e-8),
            max_iter: 5000,
            init: None,
        }
    }
}

pub fn default_gamma_grid<T: Scalar>() -> Vec<T> {
    vec![T::c(0.1), T::one(), T::c(10.0)]
}

/// Adds the mean logistic loss of `params` on `data`, scaled by `weight`, and
/// its gradient into `grad`.
fn add_logistic<T: Scalar>(data: &LabeledDataset<T>, params: &[T], weight: T, grad: &mut [T]) -> T {
    let d = data.dim();
    let scale = weight / T::from_count(data.len());
    let mut loss = T::zero();
    for s in data.iter() {
        let y: T = s.label.sign();
        let margin = y * (dot(&params[..d], s.features) + params[d]);
        loss += softplus(-margin);
        let r = -y * logistic(-margin) * scale;
        for (g, &x) in grad[..d].iter_mut().zip(s.features) {
            *g += r * x;
        }
        grad[d] += r;
    }
    loss * scale
}

pub fn fit_joint<T: Scalar>(
    target: &LabeledDataset<T>,
    sources: &LabeledDataset<T>,
    opts: &JointOptions<T>,
) -> Result<(JointModel<T>, SolverReport<T>)> {
    target.ensure_non_empty()?;
    sources.ensure_non_empty()?;
    if target.dim() != sources.dim() {
        return Err(Error::DimensionMismatch {
            expected: sources.dim(),
            got: target.dim(),
        });
    }
    if !(opts.gamma > T::zero()) {
        return Err(Error::InvalidParameter("gamma must be > 0".into()));
    }
    if opts.l2 == T::zero() {
        return Err(Error::Underdetermined(
            "with l2 = 0 every split of θ + β_q fits equally well".into(),
        ));
    }
    if !(opts.l2 > T::zero()) {
        return Err(Error::InvalidParameter("l2 must be > 0".into()));
    }
    let p = sources.dim() + 1;
    let x0 = match &opts.init {
        Some(v) if v.len() == 2 * p => v.clone(),
        Some(v) => {
            return Err(Error::DimensionMismatch {
                expected: 2 * p,
                got: v.len(),
            })
        }
        None => vec![T::zero(); 2 * p],
    };
    let mut sum = vec![T::zero(); p];
    let mut g_sum = vec![T::zero(); p];
    let objective = |z: &[T], grad: &mut [T]| -> T {
        let (beta, theta) = z.split_at(p);
        for i in 0..p {
            sum[i] = beta[i] + theta[i];
        }
        g_sum.iter_mut().for_each(|v| *v = T::zero());
        grad.iter_mut().for_each(|v| *v = T::zero());
        let mut f = add_logistic(target, &sum, T::one(), &mut g_sum);
        f += add_logistic(sources, beta, opts.gamma, &mut grad[..p]);
        let two_l2 = T::c(2.0) * opts.l2;
        for i in 0..p {
            grad[i] += g_sum[i] + two_l2 * beta[i];
            grad[p + i] = g_sum[i] + two_l2 * theta[i];
        }
        f + opts.l2 * (norm_sq(beta) + norm_sq(theta))
    };
    let min = Lbfgs::with_tolerance(opts.grad_tol, opts.max_iter).minimize(objective, x0);
    if !min.converged {
        log::warn!(
            "joint fit stopped after {} iterations with gradient norm {}",
            min.iterations,
            min.grad_norm
        );
    }
    if min.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("joint model parameters"));
    }
    let (beta, theta) = min.x.split_at(p);
    Ok((
        JointModel {
            beta_q: beta.to_vec(),
            theta: theta.to_vec(),
            gamma: opts.gamma,
            l2: opts.l2,
        },
        SolverReport {
            objective: min.value,
            grad_norm: min.grad_norm,
            iterations: min.iterations,
            converged: min.converged,
        },
    ))
}

impl<T: Scalar> JointModel<T> {
    /// Target parameters `θ + β_q`.
    pub fn beta_p(&self) -> Vec<T> {
        self.beta_q.iter().zip(&self.theta).map(|(&b, &t)| b + t).collect()
    }
}

impl<T: Scalar> Posterior<T> for JointModel<T> {
    fn dim(&self) -> usize {
        self.beta_q.len() - 1
    }

    /// `σ((θ + β_q)ᵀ[x; 1])`.
    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        let d = self.dim();
        check_dim(d, x.len())?;
        let bp = self.beta_p();
        Ok(logit_to_pair(dot(&bp[..d], x) + bp[d]))
    }
}

/// `predict_joint`: the target posterior `(p(+1|x), p(-1|x))`.
pub fn predict_joint<T: Scalar>(model: &JointModel<T>, x: &[T]) -> Result<(T, T)> {
    model.posterior(x)
}
