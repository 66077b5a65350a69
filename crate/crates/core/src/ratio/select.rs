//! Tuning `k` and `λ`.
//!
//! `k` follows the alternating heuristic: fit `θ` at the current `k`, then
//! score every candidate `k` by how well a k-NN average over the source
//! predicts `Z = exp(θᵀf(y,x))` on held-out source points, move to the best
//! candidate and repeat until `k` stops changing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit_cache, FitOptions, FitReport, NeighborCache, RatioModel};
use crate::rng::{stream, Stream};
use crate::scalar::dot;
use crate::{Error, FeatureMap, KnnIndex, LabeledDataset, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KTrace<T> {
    pub round: usize,
    pub k: usize,
    pub mse: T,
}

#[derive(Clone, Debug)]
pub struct SelectKOptions {
    pub k_grid: Vec<usize>,
    pub folds: usize,
    pub max_rounds: usize,
    /// Seeds the assignment of source rows to folds.
    pub seed: u64,
    /// First `k` to fit with; snapped to the nearest grid value. `None` starts
    /// at the smallest grid value.
    pub start_k: Option<usize>,
}

impl SelectKOptions {
    pub fn new(k_grid: Vec<usize>, seed: u64) -> Self {
        Self {
            k_grid,
            folds: 5,
            max_rounds: 10,
            seed,
            start_k: None,
        }
    }
}

/// Powers of two from 4 up to `min(512, n'/2)`; just `[min(4, n')]` for tiny sources.
pub fn default_k_grid(n_sources: usize) -> Vec<usize> {
    let cap = 512.min(n_sources / 2);
    let grid: Vec<usize> = (2..10).map(|p| 1usize << p).take_while(|&k| k <= cap).collect();
    if grid.is_empty() {
        vec![4.min(n_sources).max(1)]
    } else {
        grid
    }
}

pub fn default_lambda_grid<T: Scalar>() -> Vec<T> {
    [1e-4, 1e-3, 1e-2, 1e-1, 1.0].iter().map(|&v| T::c(v)).collect()
}

/// `k = ⌈(ln n')²⌉`, a schedule with `k/log n' → ∞` and `k/n' → 0`.
pub fn schedule_k(n_sources: usize) -> usize {
    let l = (n_sources.max(2) as f64).ln();
    ((l * l).ceil() as usize).clamp(1, n_sources.max(1))
}

/// Neighbours of every source point among the other folds, computed once for
/// the largest candidate `k` and reused as prefixes.
#[derive(Clone, Debug)]
pub struct HoldoutNeighbors {
    k_max: usize,
    /// Source row → neighbour rows (nearest first) excluding its own fold.
    lists: Vec<Vec<usize>>,
}

impl HoldoutNeighbors {
    pub fn build<T: Scalar>(sources: &LabeledDataset<T>, k_max: usize, folds: usize, seed: u64) -> Result<Self> {
        sources.ensure_non_empty()?;
        let n = sources.len();
        let folds = folds.clamp(2, n.max(2));
        if n < 2 {
            return Err(Error::InvalidParameter(
                "holdout k selection needs at least 2 source samples".into(),
            ));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, Stream::Folds));
        let mut fold_of = vec![0usize; n];
        for (pos, &row) in order.iter().enumerate() {
            fold_of[row] = pos % folds;
        }
        let mut lists = vec![Vec::new(); n];
        for f in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            if train.is_empty() {
                continue;
            }
            let index = KnnIndex::build(&sources.subset(&train))?;
            for j in (0..n).filter(|&i| fold_of[i] == f) {
                let nb = index.query(sources.x(j), k_max)?;
                lists[j] = nb.indices.iter().map(|&local| train[local]).collect();
            }
        }
        Ok(Self { k_max, lists })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }
}

/// Held-out MSE of the k-NN estimate of `Z = exp(θᵀf(y,x))` over the source.
pub fn holdout_mse<T: Scalar>(
    sources: &LabeledDataset<T>,
    holdout: &HoldoutNeighbors,
    theta: &[T],
    map: &FeatureMap,
    k: usize,
) -> Result<T> {
    let mut f = vec![T::zero(); map.dim_out()];
    let mut z = Vec::with_capacity(sources.len());
    for s in sources.iter() {
        map.eval_into(s.label, s.features, &mut f)?;
        z.push(dot(theta, &f).exp());
    }
    let mut total = T::zero();
    for (j, list) in holdout.lists.iter().enumerate() {
        let used = &list[..k.min(list.len())];
        if used.is_empty() {
            continue;
        }
        let mean = used.iter().map(|&jj| z[jj]).sum::<T>() / T::from_count(used.len());
        let e = z[j] - mean;
        total += e * e;
    }
    let mse = total / T::from_count(sources.len());
    Ok(if mse.is_finite() { mse } else { T::infinity() })
}

fn prepared_grid(grid: &[usize], n_sources: usize) -> Result<Vec<usize>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty k grid".into()));
    }
    if grid.contains(&0) {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut g: Vec<usize> = grid
        .iter()
        .map(|&k| {
            if k > n_sources {
                log::warn!("k = {k} exceeds the {n_sources} source samples; clamping");
            }
            k.min(n_sources)
        })
        .collect();
    g.sort_unstable();
    g.dedup();
    Ok(g)
}

/// Alternating k selection; returns the final fit with the holdout trace.
pub fn select_k<T: Scalar>(
    target: &LabeledDataset<T>,
    sources: &LabeledDataset<T>,
    map: &FeatureMap,
    fit_opts: &FitOptions<T>,
    opts: &SelectKOptions,
) -> Result<(RatioModel<T>, FitReport<T>)> {
    sources.ensure_non_empty()?;
    let grid = prepared_grid(&opts.k_grid, sources.len())?;
    let k_max = *grid.last().unwrap();
    let index = KnnIndex::build(sources)?;
    let full = NeighborCache::build(target, &index, map, k_max)?;
    let holdout = HoldoutNeighbors::build(sources, k_max, opts.folds, opts.seed)?;

    let mut k = match opts.start_k {
        // nearest grid value, the smaller one on ties
        Some(s) => *grid.iter().min_by_key(|&&g| g.abs_diff(s)).unwrap(),
        None => grid[0],
    };
    let mut trace = Vec::new();
    let mut round = 0;
    loop {
        let (model, mut report) = fit_cache(&full.truncated(k)?, map, fit_opts)?;
        let mut best = (T::infinity(), grid[0]);
        for &cand in &grid {
            let mse = holdout_mse(sources, &holdout, &model.theta, map, cand)?;
            trace.push(KTrace { round, k: cand, mse });
            // ascending grid + strict comparison: ties keep the smaller k
            if mse < best.0 {
                best = (mse, cand);
            }
        }
        round += 1;
        if best.1 == k || round >= opts.max_rounds {
            report.k_trace = trace;
            return Ok((model, report));
        }
        k = best.1;
    }
}

/// Mean held-out `ℓ` per target sample for every `λ` in `grid`: 5-fold
/// cross validation over the target (fold `i mod 5`), or leave-one-out below
/// 5 samples. Neighbour sets always come from the full source sample.
pub fn lambda_cv_scores<T: Scalar>(
    cache: &NeighborCache<T>,
    map: &FeatureMap,
    grid: &[T],
    fit_opts: &FitOptions<T>,
) -> Result<Vec<(T, T)>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let n = cache.len();
    let folds = if n >= 5 { 5 } else { n };
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let opts = FitOptions {
            lambda,
            ..fit_opts.clone()
        };
        let mut total = T::zero();
        for f in 0..folds {
            let (train, valid): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % folds != f);
            let theta = if train.is_empty() {
                vec![T::zero(); map.dim_out()]
            } else {
                fit_cache(&cache.rows(&train), map, &opts)?.0.theta
            };
            for &i in &valid {
                total += cache.row_objective(&theta, i);
            }
        }
        out.push((lambda, total / T::from_count(n)));
    }
    Ok(out)
}

/// The `λ` with the smallest held-out negative likelihood; ties go to the
/// larger `λ`.
pub fn select_lambda<T: Scalar>(
    target: &LabeledDataset<T>,
    sources: &LabeledDataset<T>,
    k: usize,
    grid: &[T],
    map: &FeatureMap,
    fit_opts: &FitOptions<T>,
) -> Result<T> {
    let index = KnnIndex::build(sources)?;
    let cache = NeighborCache::build(target, &index, map, k)?;
    let scores = lambda_cv_scores(&cache, map, grid, fit_opts)?;
    Ok(best_lambda(&scores))
}

pub(crate) fn best_lambda<T: Scalar>(scores: &[(T, T)]) -> T {
    let mut best = scores[0];
    for &(lambda, score) in &scores[1..] {
        if score < best.1 || (score == best.1 && lambda > best.0) || !best.1.is_finite() {
            best = (lambda, score);
        }
    }
    best.0
}
