//! The adapted classifier `p̂(y|x) = r(y,x;θ̂) · q̂(y|x)`.
//!
//! At prediction time the ratio is normalized with the source classifier
//! itself, `N(x) = Σ_y q̂(y|x) exp(θᵀf(y,x))`, which always yields a proper
//! posterior. [`CompositeModel::posterior_knn`] gives the k-NN normalized
//! variant used during training.

use serde::{Deserialize, Serialize};

use crate::classifier::Posterior;
use crate::scalar::logit_to_pair;
use crate::{Error, KnnIndex, Label, LabeledDataset, RatioModel, Result, Scalar, SourceModel};

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeModel<T, S = SourceModel<T>> {
    pub ratio: RatioModel<T>,
    pub source: S,
}

impl<T: Scalar, S: Posterior<T>> CompositeModel<T, S> {
    pub fn new(ratio: RatioModel<T>, source: S) -> Result<Self> {
        if ratio.dim() != source.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                got: ratio.dim(),
            });
        }
        Ok(Self { ratio, source })
    }

    /// k-NN normalized values `q̂(y|x) exp(θᵀf(y,x)) / N̂(x)` with `N̂` the
    /// mean of `exp(θᵀf(y_j,x_j))` over the `k` nearest source pairs. These
    /// need not sum to one.
    pub fn posterior_knn(&self, x: &[T], index: &KnnIndex<T>, k: usize) -> Result<(T, T)> {
        let (qp, qm) = self.source.posterior(x)?;
        let nb = index.query(x, k)?;
        let scores: Vec<T> = nb
            .indices
            .iter()
            .map(|&j| self.ratio.score(index.label(j), index.point(j)))
            .collect::<Result<_>>()?;
        let max = scores.iter().fold(T::neg_infinity(), |m, &s| m.max(s));
        let log_n = max + (scores.iter().map(|&s| (s - max).exp()).sum::<T>() / T::from_count(scores.len())).ln();
        let sp = self.ratio.score(Label::Pos, x)?;
        let sm = self.ratio.score(Label::Neg, x)?;
        Ok((qp * (sp - log_n).exp(), qm * (sm - log_n).exp()))
    }
}

impl<T: Scalar, S: Posterior<T>> Posterior<T> for CompositeModel<T, S> {
    fn dim(&self) -> usize {
        self.source.dim()
    }

    /// `q̂(y|x) e^{θᵀf(y,x)} / Σ_y' q̂(y'|x) e^{θᵀf(y',x)}`, computed on the
    /// logit scale.
    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        let (qp, qm) = self.source.posterior(x)?;
        let sp = self.ratio.score(Label::Pos, x)?;
        let sm = self.ratio.score(Label::Neg, x)?;
        let logit = (qp.ln() + sp) - (qm.ln() + sm);
        Ok(logit_to_pair(logit))
    }
}

pub const COMPOSITE_FORMAT_VERSION: u32 = 1;

impl<T: Scalar> CompositeModel<T, SourceModel<T>> {
    /// `{version, ratio: {...}, source: {...}}` bundling both envelopes.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "version": COMPOSITE_FORMAT_VERSION,
            "ratio": self.ratio.to_json_value()?,
            "source": self.source.to_json_value()?,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(s)?;
        let version = v["version"].as_u64().unwrap_or(0) as u32;
        if version != COMPOSITE_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let ratio = RatioModel::from_json_value(v["ratio"].take())?;
        let source = SourceModel::from_json_value(v["source"].take())?;
        Self::new(ratio, source)
    }
}

/// KL divergence estimate `KL[p‖q] ≈ -ℓ(θ̂)` from the unpenalized objective
/// at the fitted parameter; `ℓ(θ̂) ≤ ℓ(0) = 0`, so the estimate is
/// non-negative for a converged fit, and exactly zero when `θ̂ = 0`.
pub fn estimate_kl<T: Scalar>(fitted_objective: T) -> T {
    -fitted_objective
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    pub miss_rate: T,
    /// `-(1/|test|) Σ log p̂(y_i|x_i)`.
    pub neg_holdout_loglik: T,
}

pub fn evaluate<T: Scalar, P: Posterior<T> + ?Sized>(model: &P, test: &LabeledDataset<T>) -> Result<Evaluation<T>> {
    test.ensure_non_empty()?;
    let clip = T::prob_clip();
    let mut miss = 0usize;
    let mut nll = T::zero();
    for s in test.iter() {
        let (p, m) = model.posterior(s.features)?;
        let predicted = if p >= T::c(0.5) { Label::Pos } else { Label::Neg };
        if predicted != s.label {
            miss += 1;
        }
        let py = if s.label == Label::Pos { p } else { m };
        nll -= py.max(clip).ln();
    }
    let n = T::from_count(test.len());
    Ok(Evaluation {
        miss_rate: T::from_count(miss) / n,
        neg_holdout_loglik: nll / n,
    })
}
