use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the estimators are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant. Panics only for non-representable values,
    /// which no finite `f64` is for `f32`/`f64`.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar conversion")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Probability clipping floor: `1e-12`, raised to the type's epsilon when
    /// that is coarser so that `1 - clip` stays below one.
    #[inline]
    fn prob_clip() -> Self {
        Self::c(1e-12).max(Self::epsilon())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub(crate) fn inf_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// Numerically stable `ln(1 + exp(z))`.
pub(crate) fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub(crate) fn logistic<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Splits the logit `z = ln(p₊/p₋)` into `(p₊, p₋)` with both clipped into
/// `(ε, 1-ε)`. The smaller probability is computed directly and the larger as
/// its complement, which makes the pair sum to one exactly.
pub(crate) fn logit_to_pair<T: Scalar>(z: T) -> (T, T) {
    let clip = T::prob_clip();
    let half = T::c(0.5);
    if z >= T::zero() {
        let minus = logistic(-z).max(clip).min(half);
        (T::one() - minus, minus)
    } else {
        let plus = logistic(z).max(clip).min(half);
        (plus, T::one() - plus)
    }
}
