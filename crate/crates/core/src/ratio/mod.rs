//! Posterior-ratio estimation.
//!
//! The ratio `r(y,x;θ) = exp(θᵀf(y,x)) / N(x;θ)` is fit by minimizing the
//! k-NN normalized negative likelihood `ℓ(θ)` (see [`cache`]) plus a penalty
//! on `θ`. The problem is convex, so the L-BFGS solution from `θ₀ = 0` is the
//! global minimizer.

mod cache;
mod select;

use serde::{Deserialize, Serialize};

pub use cache::{gradient, objective, NeighborCache};
pub use select::{
    default_k_grid, default_lambda_grid, holdout_mse, lambda_cv_scores, schedule_k, select_k, select_lambda,
    HoldoutNeighbors, KTrace, SelectKOptions,
};

use crate::optim::Lbfgs;
use crate::scalar::{dot, norm_sq};
use crate::{Error, FeatureMap, KnnIndex, Label, LabeledDataset, Result, Scalar};

/// Regularizer on `θ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `λ‖θ‖₂²`.
    #[default]
    Squared,
    /// `λ‖θ‖₂`, non-differentiable at the origin (subgradient `0` there).
    Norm,
}

impl Penalty {
    fn value<T: Scalar>(self, lambda: T, theta: &[T]) -> T {
        match self {
            Penalty::Squared => lambda * norm_sq(theta),
            Penalty::Norm => lambda * norm_sq(theta).sqrt(),
        }
    }

    fn add_gradient<T: Scalar>(self, lambda: T, theta: &[T], grad: &mut [T]) {
        let scale = match self {
            Penalty::Squared => T::c(2.0) * lambda,
            Penalty::Norm => {
                let nrm = norm_sq(theta).sqrt();
                if nrm > T::zero() {
                    lambda / nrm
                } else {
                    T::zero()
                }
            }
        };
        for (g, &t) in grad.iter_mut().zip(theta) {
            *g += scale * t;
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions<T> {
    pub lambda: T,
    pub penalty: Penalty,
    /// Stop when `‖∇‖∞` of the penalized objective is at or below this.
    pub grad_tol: T,
    pub max_iter: usize,
    /// Starting `θ`; zero when absent.
    pub init: Option<Vec<T>>,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            lambda: T::c(1e-3),
            penalty: Penalty::Squared,
            grad_tol: T::c(1e-8),
            max_iter: 5000,
            init: None,
        }
    }
}

impl<T: Scalar> FitOptions<T> {
    pub fn with_lambda(lambda: T) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

/// Fitted posterior ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct RatioModel<T> {
    pub theta: Vec<T>,
    pub feature_map: FeatureMap,
    /// Neighbour count used in training.
    pub k: usize,
    pub lambda: T,
    #[serde(default)]
    pub penalty: Penalty,
}

impl<T: Scalar> RatioModel<T> {
    pub fn new(theta: Vec<T>, feature_map: FeatureMap, k: usize, lambda: T) -> Result<Self> {
        let m = Self {
            theta,
            feature_map,
            k,
            lambda,
            penalty: Penalty::Squared,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.feature_map.dim_in()
    }

    /// `θᵀf(y, x)`, the log of the unnormalized ratio.
    pub fn score(&self, y: Label, x: &[T]) -> Result<T> {
        let f = self.feature_map.eval(y, x)?;
        Ok(dot(&self.theta, &f))
    }

    /// Value of the fitted penalty at `θ`.
    pub fn penalty_value(&self) -> T {
        self.penalty.value(self.lambda, &self.theta)
    }

    fn validate(&self) -> Result<()> {
        if self.theta.len() != self.feature_map.dim_out() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_map.dim_out(),
                got: self.theta.len(),
            });
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(())
    }
}

pub const RATIO_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct RatioEnvelope<T> {
    version: u32,
    #[serde(flatten)]
    model: RatioModel<T>,
}

impl<T: Scalar> RatioModel<T> {
    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(RatioEnvelope {
            version: RATIO_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let env: RatioEnvelope<T> = serde_json::from_value(v)?;
        if env.version != RATIO_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(env.version));
        }
        env.model.validate()?;
        Ok(env.model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport<T> {
    /// Unpenalized `ℓ(θ̂)`.
    pub final_objective: T,
    /// `ℓ(θ̂)` plus the penalty.
    pub regularized_objective: T,
    /// `‖∇‖∞` of the penalized objective at `θ̂`.
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Effective neighbour count of the final fit.
    pub k: usize,
    /// Holdout MSE of every candidate in every round of k selection.
    pub k_trace: Vec<KTrace<T>>,
}

/// Minimizes the penalized objective over a prepared neighbour cache.
pub fn fit_cache<T: Scalar>(
    cache: &NeighborCache<T>,
    map: &FeatureMap,
    opts: &FitOptions<T>,
) -> Result<(RatioModel<T>, FitReport<T>)> {
    if !(opts.lambda >= T::zero()) || !opts.lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {}",
            opts.lambda
        )));
    }
    if cache.dim_out() != map.dim_out() {
        return Err(Error::DimensionMismatch {
            expected: map.dim_out(),
            got: cache.dim_out(),
        });
    }
    let m = map.dim_out();
    let x0 = match &opts.init {
        Some(v) if v.len() == m => v.clone(),
        Some(v) => {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: v.len(),
            })
        }
        None => vec![T::zero(); m],
    };
    let (lambda, penalty) = (opts.lambda, opts.penalty);
    let solver = Lbfgs::with_tolerance(opts.grad_tol, opts.max_iter);
    let min = solver.minimize(
        |theta, g| {
            let v = cache.evaluate_unchecked(theta, Some(&mut *g));
            penalty.add_gradient(lambda, theta, g);
            v + penalty.value(lambda, theta)
        },
        x0,
    );
    if !min.converged {
        log::warn!(
            "ratio fit stopped after {} iterations with gradient norm {}",
            min.iterations,
            min.grad_norm
        );
    }
    let model = RatioModel {
        theta: min.x,
        feature_map: map.clone(),
        k: cache.k(),
        lambda,
        penalty,
    };
    model.validate()?;
    let final_objective = cache.evaluate(&model.theta, None)?;
    let mut g = vec![T::zero(); m];
    let reg = cache.evaluate(&model.theta, Some(&mut g))? + model.penalty_value();
    penalty.add_gradient(lambda, &model.theta, &mut g);
    let report = FitReport {
        final_objective,
        regularized_objective: reg,
        grad_norm: cache::grad_inf_norm(&g),
        iterations: min.iterations,
        converged: min.converged,
        k: cache.k(),
        k_trace: Vec::new(),
    };
    Ok((model, report))
}

/// Fits `θ̂ = argmin ℓ(θ) + penalty` with neighbours from `sources`.
pub fn fit<T: Scalar>(
    target: &LabeledDataset<T>,
    sources: &LabeledDataset<T>,
    k: usize,
    map: &FeatureMap,
    opts: &FitOptions<T>,
) -> Result<(RatioModel<T>, FitReport<T>)> {
    let index = KnnIndex::build(sources)?;
    let cache = NeighborCache::build(target, &index, map, k)?;
    fit_cache(&cache, map, opts)
}
