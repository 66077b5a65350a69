//! Sufficient-statistic maps `f(y, x) = y · h(x)`.
//!
//! Every map multiplies a label-free basis `h(x)` by the label sign, so
//! `f(-y, x) = -f(y, x)` holds by construction.

use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result, Scalar};

/// One basis function `h_i(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisTerm {
    Constant,
    Coordinate(usize),
    /// `x_i · x_j`; `i == j` gives a square.
    Product(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// `y · [x₁, …, x_d, 1]`.
    LinearWithBias { dim: usize },
    /// `y · [h₁(x), …, h_m(x)]` over an explicit basis.
    Basis { dim: usize, terms: Vec<BasisTerm> },
}

impl FeatureMap {
    pub fn linear(dim: usize) -> Self {
        FeatureMap::LinearWithBias { dim }
    }

    pub fn basis(dim: usize, terms: Vec<BasisTerm>) -> Result<Self> {
        for t in &terms {
            let bad = match *t {
                BasisTerm::Constant => false,
                BasisTerm::Coordinate(i) => i >= dim,
                BasisTerm::Product(i, j) => i >= dim || j >= dim,
            };
            if bad {
                return Err(Error::InvalidParameter(format!(
                    "basis term {t:?} out of range for input dimension {dim}"
                )));
            }
        }
        Ok(FeatureMap::Basis { dim, terms })
    }

    /// Input dimension `d`.
    pub fn dim_in(&self) -> usize {
        match self {
            FeatureMap::LinearWithBias { dim } | FeatureMap::Basis { dim, .. } => *dim,
        }
    }

    /// Output dimension `m'`.
    pub fn dim_out(&self) -> usize {
        match self {
            FeatureMap::LinearWithBias { dim } => dim + 1,
            FeatureMap::Basis { terms, .. } => terms.len(),
        }
    }

    pub fn eval<T: Scalar>(&self, y: Label, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim_out()];
        self.eval_into(y, x, &mut out)?;
        Ok(out)
    }

    /// Writes `f(y, x)` into `out`, which must have length `dim_out()`.
    pub fn eval_into<T: Scalar>(&self, y: Label, x: &[T], out: &mut [T]) -> Result<()> {
        if x.len() != self.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_in(),
                got: x.len(),
            });
        }
        debug_assert_eq!(out.len(), self.dim_out());
        let s: T = y.sign();
        match self {
            FeatureMap::LinearWithBias { dim } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = s * v;
                }
                out[*dim] = s;
            }
            FeatureMap::Basis { terms, .. } => {
                for (o, t) in out.iter_mut().zip(terms) {
                    let h = match *t {
                        BasisTerm::Constant => T::one(),
                        BasisTerm::Coordinate(i) => x[i],
                        BasisTerm::Product(i, j) => x[i] * x[j],
                    };
                    *o = s * h;
                }
            }
        }
        Ok(())
    }
}
