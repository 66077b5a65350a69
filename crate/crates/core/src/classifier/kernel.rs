use serde::{Deserialize, Serialize};

use super::{check_dim, Posterior, SolverReport};
use crate::optim::Lbfgs;
use crate::scalar::{dot, logistic, logit_to_pair, softplus};
use crate::{Error, LabeledDataset, Result, Scalar};

/// RBF kernel logistic regression,
/// `q̂(+1|x) = σ(Σ_j α_j k(x, c_j) + b)` with
/// `k(x, x') = exp(-‖x - x'‖² / (2σ²))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct KernelLogReg<T> {
    pub dim: usize,
    /// Row-major `m × dim`.
    pub centers: Vec<T>,
    pub duals: Vec<T>,
    pub intercept: T,
    pub bandwidth: T,
    pub l2: T,
}

#[derive(Clone, Debug)]
pub struct KernelOptions<T> {
    /// RBF width `σ`; the median pairwise distance when absent.
    pub bandwidth: Option<T>,
    /// RKHS penalty `l2 · αᵀKα`, strictly positive.
    pub l2: T,
    /// Use only the first `m` training rows as centers.
    pub max_centers: Option<usize>,
    pub grad_tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for KernelOptions<T> {
    fn default() -> Self {
        Self {
            bandwidth: None,
            l2: T::c(1e-3),
            max_centers: None,
            grad_tol: T::c(1e-8),
            max_iter: 5000,
        }
    }
}

#[inline]
fn rbf<T: Scalar>(a: &[T], b: &[T], inv_two_sigma_sq: T) -> T {
    let d2 = a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| {
        let d = u - v;
        acc + d * d
    });
    (-d2 * inv_two_sigma_sq).exp()
}

/// Median Euclidean distance over pairs among the first 1000 rows (1 when
/// there are fewer than two rows or all distances are zero).
pub fn median_pairwise_distance<T: Scalar>(data: &LabeledDataset<T>) -> T {
    let m = data.len().min(1000);
    let mut dists = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let d2: T = data
                .x(i)
                .iter()
                .zip(data.x(j))
                .fold(T::zero(), |acc, (&u, &v)| acc + (u - v) * (u - v));
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return T::one();
    }
    let mid = dists.len() / 2;
    let (_, med, _) = dists.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    if *med > T::zero() {
        *med
    } else {
        T::one()
    }
}

impl<T: Scalar> KernelLogReg<T> {
    pub fn new(dim: usize, centers: Vec<T>, duals: Vec<T>, intercept: T, bandwidth: T, l2: T) -> Result<Self> {
        let m = Self {
            dim,
            centers,
            duals,
            intercept,
            bandwidth,
            l2,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_centers(&self) -> usize {
        self.duals.len()
    }

    fn center(&self, j: usize) -> &[T] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn logit(&self, x: &[T]) -> Result<T> {
        check_dim(self.dim, x.len())?;
        let g = T::one() / (T::c(2.0) * self.bandwidth * self.bandwidth);
        let mut z = self.intercept;
        for (j, &a) in self.duals.iter().enumerate() {
            z += a * rbf(x, self.center(j), g);
        }
        Ok(z)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.bandwidth > T::zero()) || !self.bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        if self.centers.len() != self.duals.len() * self.dim {
            return Err(Error::InvalidParameter(
                "number of centers differs from number of dual weights".into(),
            ));
        }
        if self.duals.iter().chain(&self.centers).any(|v| !v.is_finite()) || !self.intercept.is_finite() {
            return Err(Error::NonFinite("kernel logistic regression parameters"));
        }
        Ok(())
    }
}

impl<T: Scalar> Posterior<T> for KernelLogReg<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        Ok(logit_to_pair(self.logit(x)?))
    }
}

/// Eigenvalues of the center kernel below this fraction of the largest are
/// treated as zero; those directions barely move any prediction.
const EIGEN_CUTOFF: f64 = 1e-10;

/// `U Λ^{-1/2}` (row-major `m × r`) over the retained eigenpairs of the
/// symmetric `m × m` matrix `kmm`.
fn whitening_basis<T: Scalar>(kmm: &[T], m: usize) -> (Vec<T>, usize) {
    let mat = nalgebra::DMatrix::from_fn(m, m, |i, j| kmm[i * m + j].to_f64_lossy());
    let eig = nalgebra::SymmetricEigen::new(mat);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    // descending eigenvalue order keeps the basis layout deterministic
    let mut keep: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > EIGEN_CUTOFF * top).collect();
    keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let r = keep.len();
    let mut basis = vec![T::zero(); m * r];
    for (c, &k) in keep.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[k].sqrt();
        for j in 0..m {
            basis[j * r + c] = T::c(eig.eigenvectors[(j, k)] * scale);
        }
    }
    (basis, r)
}

/// Fits kernel logistic regression with the training rows (or the first
/// `max_centers` of them) as centers. The reported gradient norm is that of
/// the whitened problem.
pub fn fit_kernel_logreg<T: Scalar>(
    data: &LabeledDataset<T>,
    opts: &KernelOptions<T>,
) -> Result<(KernelLogReg<T>, SolverReport<T>)> {
    data.ensure_non_empty()?;
    if !(opts.l2 > T::zero()) {
        return Err(Error::InvalidParameter("kernel l2 must be > 0".into()));
    }
    let bandwidth = match opts.bandwidth {
        Some(b) if b > T::zero() && b.is_finite() => b,
        Some(b) => return Err(Error::InvalidParameter(format!("bandwidth must be > 0, got {b}"))),
        None => median_pairwise_distance(data),
    };
    let n = data.len();
    let m = opts.max_centers.map_or(n, |c| c.clamp(1, n));
    let g = T::one() / (T::c(2.0) * bandwidth * bandwidth);

    // n × m kernel; the first m rows are the center-center block
    let mut kmat = vec![T::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            kmat[i * m + j] = if i < m && j < i {
                kmat[j * m + i]
            } else {
                rbf(data.x(i), data.x(j), g)
            };
        }
    }
    let (basis, rank) = whitening_basis(&kmat[..m * m], m);
    // whitened features z_i = Λ^{-1/2} Uᵀ k(x_i): the RKHS penalty αᵀKα
    // becomes ‖w‖² with α = U Λ^{-1/2} w, and the problem is well conditioned
    let mut z = vec![T::zero(); n * rank];
    for i in 0..n {
        let zi = &mut z[i * rank..(i + 1) * rank];
        for (j, &k) in kmat[i * m..(i + 1) * m].iter().enumerate() {
            for (zv, &b) in zi.iter_mut().zip(&basis[j * rank..(j + 1) * rank]) {
                *zv += k * b;
            }
        }
    }
    drop(kmat);
    let ys: Vec<T> = data.labels().iter().map(|l| l.sign()).collect();
    let inv_n = T::one() / T::from_count(n);
    let two = T::c(2.0);

    let objective = |p: &[T], grad: &mut [T]| -> T {
        let (w, b) = (&p[..rank], p[rank]);
        grad[..rank]
            .iter_mut()
            .zip(w)
            .for_each(|(g, &wv)| *g = two * opts.l2 * wv);
        let mut loss = T::zero();
        let mut gb = T::zero();
        for i in 0..n {
            let zi = &z[i * rank..(i + 1) * rank];
            let margin = ys[i] * (dot(zi, w) + b);
            loss += softplus(-margin);
            let r = -ys[i] * logistic(-margin) * inv_n;
            gb += r;
            for (g, &zv) in grad[..rank].iter_mut().zip(zi) {
                *g += r * zv;
            }
        }
        grad[rank] = gb;
        loss * inv_n + opts.l2 * dot(w, w)
    };
    let solver = Lbfgs::with_tolerance(opts.grad_tol, opts.max_iter);
    let min = solver.minimize(objective, vec![T::zero(); rank + 1]);
    if !min.converged {
        log::warn!(
            "kernel logistic regression stopped after {} iterations with gradient norm {}",
            min.iterations,
            min.grad_norm
        );
    }
    let mut duals = vec![T::zero(); m];
    for (j, a) in duals.iter_mut().enumerate() {
        *a = dot(&basis[j * rank..(j + 1) * rank], &min.x[..rank]);
    }
    let model = KernelLogReg::new(
        data.dim(),
        data.flat_features()[..m * data.dim()].to_vec(),
        duals,
        min.x[rank],
        bandwidth,
        opts.l2,
    )?;
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

/// Cross-validated `l2` for [`fit_kernel_logreg`] with the other settings in
/// `opts`. The bandwidth is fixed from the full sample first so every fold
/// uses the same kernel.
pub fn select_kernel_l2<T: Scalar>(
    data: &LabeledDataset<T>,
    grid: &[T],
    folds: usize,
    opts: &KernelOptions<T>,
) -> Result<T> {
    let opts = KernelOptions {
        bandwidth: Some(opts.bandwidth.unwrap_or_else(|| median_pairwise_distance(data))),
        ..opts.clone()
    };
    super::cv_select(data, grid, folds, |train, l2| {
        Ok(fit_kernel_logreg(train, &KernelOptions { l2, ..opts.clone() })?.0)
    })
}
