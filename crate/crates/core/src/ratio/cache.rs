//! Per-target neighbour sets and the k-NN normalized negative likelihood
//!
//! ```text
//! ℓ(θ) = -(1/n) Σ_i θᵀf(y_i, x_i) + (1/n) Σ_i log( (1/k) Σ_{j ∈ N(x_i)} exp(θᵀf(y_j, x_j)) )
//! ```
//!
//! where `N(x_i)` are the `k` nearest source inputs to the target input `x_i`
//! and the inner features are evaluated at the *source* pairs.

use crate::scalar::{dot, inf_norm};
use crate::{Error, FeatureMap, KnnIndex, LabeledDataset, Result, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborCache<T> {
    k: usize,
    requested_k: usize,
    m: usize,
    /// `n × m`: `f(y_i, x_i)` for each target row.
    target_features: Vec<T>,
    /// `n × k` source indices, nearest first.
    neighbors: Vec<usize>,
    /// `n × k × m`: `f(y_j, x_j)` for each neighbour.
    neighbor_features: Vec<T>,
}

impl<T: Scalar> NeighborCache<T> {
    /// Looks up the `k` source neighbours of every target input. `k` above
    /// the source size is clamped with a warning.
    pub fn build(target: &LabeledDataset<T>, index: &KnnIndex<T>, map: &FeatureMap, k: usize) -> Result<Self> {
        target.ensure_non_empty()?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if target.dim() != map.dim_in() || index.dim() != map.dim_in() {
            return Err(Error::DimensionMismatch {
                expected: map.dim_in(),
                got: if target.dim() != map.dim_in() {
                    target.dim()
                } else {
                    index.dim()
                },
            });
        }
        let k_eff = k.min(index.len());
        if k_eff < k {
            log::warn!("k = {k} exceeds the {} source samples; using k = {k_eff}", index.len());
        }
        let m = map.dim_out();
        let n = target.len();
        let mut target_features = vec![T::zero(); n * m];
        let mut neighbors = Vec::with_capacity(n * k_eff);
        let mut neighbor_features = vec![T::zero(); n * k_eff * m];
        for i in 0..n {
            map.eval_into(target.label(i), target.x(i), &mut target_features[i * m..(i + 1) * m])?;
            let nb = index.query(target.x(i), k_eff)?;
            for (slot, &j) in nb.indices.iter().enumerate() {
                let off = (i * k_eff + slot) * m;
                map.eval_into(index.label(j), index.point(j), &mut neighbor_features[off..off + m])?;
            }
            neighbors.extend_from_slice(&nb.indices);
        }
        Ok(Self {
            k: k_eff,
            requested_k: k,
            m,
            target_features,
            neighbors,
            neighbor_features,
        })
    }

    /// Effective neighbour count.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn requested_k(&self) -> usize {
        self.requested_k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn dim_out(&self) -> usize {
        self.m
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn target_feature(&self, i: usize) -> &[T] {
        &self.target_features[i * self.m..(i + 1) * self.m]
    }

    fn neighbor_feature_block(&self, i: usize) -> &[T] {
        let w = self.k * self.m;
        &self.neighbor_features[i * w..(i + 1) * w]
    }

    /// Cache for the `k' ≤ k` nearest neighbours; equal to building with `k'`
    /// since neighbour lists are prefix-stable.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if k >= self.k {
            let mut out = self.clone();
            out.requested_k = k;
            return Ok(out);
        }
        let n = self.len();
        let mut neighbors = Vec::with_capacity(n * k);
        let mut neighbor_features = Vec::with_capacity(n * k * self.m);
        for i in 0..n {
            neighbors.extend_from_slice(&self.neighbors(i)[..k]);
            neighbor_features.extend_from_slice(&self.neighbor_feature_block(i)[..k * self.m]);
        }
        Ok(Self {
            k,
            requested_k: k,
            m: self.m,
            target_features: self.target_features.clone(),
            neighbors,
            neighbor_features,
        })
    }

    /// Cache restricted to the given target rows.
    pub fn rows(&self, rows: &[usize]) -> Self {
        let (k, m) = (self.k, self.m);
        let mut out = Self {
            k,
            requested_k: self.requested_k,
            m,
            target_features: Vec::with_capacity(rows.len() * m),
            neighbors: Vec::with_capacity(rows.len() * k),
            neighbor_features: Vec::with_capacity(rows.len() * k * m),
        };
        for &i in rows {
            out.target_features.extend_from_slice(self.target_feature(i));
            out.neighbors.extend_from_slice(self.neighbors(i));
            out.neighbor_features.extend_from_slice(self.neighbor_feature_block(i));
        }
        out
    }

    fn check_theta(&self, theta: &[T]) -> Result<()> {
        if theta.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(())
    }

    /// Max-shifted log-sum-exp pieces for row `i`: returns `(max, Σ exp(s_j - max))`
    /// and leaves the shifted exponentials in `w`.
    fn row_weights(&self, theta: &[T], i: usize, w: &mut [T]) -> (T, T) {
        let block = self.neighbor_feature_block(i);
        let mut max = T::neg_infinity();
        for (j, wj) in w.iter_mut().enumerate() {
            let s = dot(theta, &block[j * self.m..(j + 1) * self.m]);
            *wj = s;
            max = max.max(s);
        }
        let mut sum = T::zero();
        for wj in w.iter_mut() {
            *wj = (*wj - max).exp();
            sum += *wj;
        }
        (max, sum)
    }

    /// `log N̂(θ; x_i) = log (1/k) Σ_j exp(θᵀf_j)`.
    pub fn log_normalizer(&self, theta: &[T], i: usize) -> T {
        let mut w = vec![T::zero(); self.k];
        let (max, sum) = self.row_weights(theta, i, &mut w);
        max + sum.ln() - T::from_count(self.k).ln()
    }

    /// `N̂(θ; x_i)` (may overflow for extreme `θ`; use
    /// [`log_normalizer`](Self::log_normalizer) there).
    pub fn normalizer(&self, theta: &[T], i: usize) -> T {
        self.log_normalizer(theta, i).exp()
    }

    /// Row `i`'s contribution `-θᵀf(y_i,x_i) + log N̂(θ; x_i)`.
    pub fn row_objective(&self, theta: &[T], i: usize) -> T {
        -dot(theta, self.target_feature(i)) + self.log_normalizer(theta, i)
    }

    /// `ℓ(θ)` and, when `grad` is given, `∇ℓ(θ)`.
    pub fn evaluate(&self, theta: &[T], grad: Option<&mut [T]>) -> Result<T> {
        self.check_theta(theta)?;
        Ok(self.evaluate_unchecked(theta, grad))
    }

    pub(crate) fn evaluate_unchecked(&self, theta: &[T], mut grad: Option<&mut [T]>) -> T {
        let n = self.len();
        let (k, m) = (self.k, self.m);
        let ln_k = T::from_count(k).ln();
        let mut w = vec![T::zero(); k];
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        let mut linear = T::zero();
        let mut log_norm = T::zero();
        for i in 0..n {
            let fp = self.target_feature(i);
            linear += dot(theta, fp);
            let (max, sum) = self.row_weights(theta, i, &mut w);
            log_norm += max + sum.ln() - ln_k;
            if let Some(g) = grad.as_deref_mut() {
                // softmax-weighted neighbour features minus the target feature
                let inv = T::one() / sum;
                let block = self.neighbor_feature_block(i);
                for (j, &wj) in w.iter().enumerate() {
                    let c = wj * inv;
                    for (gv, &fv) in g.iter_mut().zip(&block[j * m..(j + 1) * m]) {
                        *gv += c * fv;
                    }
                }
                for (gv, &fv) in g.iter_mut().zip(fp) {
                    *gv -= fv;
                }
            }
        }
        let inv_n = T::one() / T::from_count(n);
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v *= inv_n);
        }
        (log_norm - linear) * inv_n
    }
}

/// The negative likelihood `ℓ(θ)`, log-sum-exp stabilized.
pub fn objective<T: Scalar>(theta: &[T], cache: &NeighborCache<T>) -> Result<T> {
    cache.evaluate(theta, None)
}

/// The analytic gradient `∇ℓ(θ)`.
pub fn gradient<T: Scalar>(theta: &[T], cache: &NeighborCache<T>) -> Result<Vec<T>> {
    let mut g = vec![T::zero(); cache.dim_out()];
    cache.evaluate(theta, Some(&mut g))?;
    Ok(g)
}

pub(crate) fn grad_inf_norm<T: Scalar>(g: &[T]) -> T {
    inf_norm(g)
}
