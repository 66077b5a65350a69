//! Probabilistic binary classifiers supplying the source posterior `q̂(y|x)`.
//!
//! Every classifier reports `(p(+1|x), p(-1|x))` clipped into
//! `(ε, 1-ε)` with `ε = 1e-12`, and the pair sums to one exactly.

mod kernel;
mod linear;

use serde::{Deserialize, Serialize};

pub use kernel::{fit_kernel_logreg, median_pairwise_distance, select_kernel_l2, KernelLogReg, KernelOptions};
pub use linear::{fit_logreg, select_l2, LinearLogReg, LogRegOptions};

use crate::{Error, Label, LabeledDataset, Result, Scalar};

/// Anything that yields a binary class posterior.
pub trait Posterior<T: Scalar> {
    fn dim(&self) -> usize;

    /// `(p(+1|x), p(-1|x))`.
    fn posterior(&self, x: &[T]) -> Result<(T, T)>;

    fn predict_proba(&self, x: &[T], y: Label) -> Result<T> {
        let (p, m) = self.posterior(x)?;
        Ok(match y {
            Label::Pos => p,
            Label::Neg => m,
        })
    }

    /// `argmax_y p(y|x)`; an exact tie goes to `+1`.
    fn classify(&self, x: &[T]) -> Result<Label> {
        let (p, _) = self.posterior(x)?;
        Ok(if p >= T::c(0.5) { Label::Pos } else { Label::Neg })
    }
}

impl<T: Scalar, P: Posterior<T> + ?Sized> Posterior<T> for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        (**self).posterior(x)
    }
}

pub(crate) fn check_dim(expected: usize, x_len: usize) -> Result<()> {
    if expected != x_len {
        Err(Error::DimensionMismatch { expected, got: x_len })
    } else {
        Ok(())
    }
}

/// Outcome of a classifier fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport<T> {
    pub objective: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
}

/// A fitted source classifier of either kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum SourceModel<T> {
    Linear(LinearLogReg<T>),
    Kernel(KernelLogReg<T>),
}

impl<T: Scalar> Posterior<T> for SourceModel<T> {
    fn dim(&self) -> usize {
        match self {
            SourceModel::Linear(m) => m.dim(),
            SourceModel::Kernel(m) => m.dim(),
        }
    }

    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        match self {
            SourceModel::Linear(m) => m.posterior(x),
            SourceModel::Kernel(m) => m.posterior(x),
        }
    }
}

impl<T: Scalar> From<LinearLogReg<T>> for SourceModel<T> {
    fn from(m: LinearLogReg<T>) -> Self {
        SourceModel::Linear(m)
    }
}

impl<T: Scalar> From<KernelLogReg<T>> for SourceModel<T> {
    fn from(m: KernelLogReg<T>) -> Self {
        SourceModel::Kernel(m)
    }
}

pub const SOURCE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct SourceEnvelope<T> {
    version: u32,
    #[serde(flatten)]
    model: SourceModel<T>,
}

impl<T: Scalar> SourceModel<T> {
    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(SourceEnvelope {
            version: SOURCE_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let env: SourceEnvelope<T> = serde_json::from_value(v)?;
        if env.version != SOURCE_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(env.version));
        }
        env.model.validate()?;
        Ok(env.model)
    }

    fn validate(&self) -> Result<()> {
        match self {
            SourceModel::Linear(m) => m.validate(),
            SourceModel::Kernel(m) => m.validate(),
        }
    }
}

/// Cross-validated choice of a penalty: the value in `grid` whose fits have
/// the best mean held-out log-likelihood, with row `i` in fold `i mod folds`
/// (all rows train and validate when `folds` is 1). Ties go to the larger
/// penalty.
pub(crate) fn cv_select<T: Scalar, M: Posterior<T>>(
    data: &LabeledDataset<T>,
    grid: &[T],
    folds: usize,
    fit: impl Fn(&LabeledDataset<T>, T) -> Result<M>,
) -> Result<T> {
    data.ensure_non_empty()?;
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty l2 grid".into()));
    }
    let folds = folds.clamp(1, data.len());
    let mut best: Option<(T, T)> = None;
    for &l2 in grid {
        let mut total = T::zero();
        for f in 0..folds {
            let (train, valid): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|i| folds == 1 || i % folds != f);
            let model = fit(&data.subset(&train), l2)?;
            for &i in &valid {
                total += model.predict_proba(data.x(i), data.label(i))?.ln();
            }
        }
        let score = total / T::from_count(data.len());
        best = match best {
            Some((bs, bl)) if score < bs || (score == bs && l2 <= bl) => Some((bs, bl)),
            _ => Some((score, l2)),
        };
    }
    Ok(best.unwrap().1)
}
