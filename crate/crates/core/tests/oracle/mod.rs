//! Independent reference implementations used by the property and
//! acceptance tests. Nothing here calls into the estimator code paths it
//! checks: neighbours come from a flat scan, objectives are summed directly,
//! grouped fits use Newton's method on the exact normalizer.

#![allow(dead_code)]

use posterior_ratio::{Label, LabeledDataset};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// `k` nearest rows of `points` to `x`, ordered by `(squared distance, index)`.
pub fn flat_knn(points: &LabeledDataset<f64>, x: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..points.len())
        .map(|i| {
            let s: f64 = points.x(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (s, i)
        })
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d.into_iter().take(k).map(|(_, i)| i).collect()
}

/// `y · [x; 1]`.
pub fn lin_features(y: Label, x: &[f64]) -> Vec<f64> {
    let s = if y == Label::Pos { 1.0 } else { -1.0 };
    x.iter().map(|v| s * v).chain(std::iter::once(s)).collect()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log of the mean of `exp(s)`.
pub fn log_mean_exp(s: &[f64]) -> f64 {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + (s.iter().map(|v| (v - m).exp()).sum::<f64>() / s.len() as f64).ln()
}

/// The k-NN normalized negative likelihood with linear features, computed
/// row by row from flat-scan neighbours.
pub fn brute_objective(theta: &[f64], target: &LabeledDataset<f64>, sources: &LabeledDataset<f64>, k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..target.len() {
        let fp = lin_features(target.label(i), target.x(i));
        let scores: Vec<f64> = flat_knn(sources, target.x(i), k)
            .into_iter()
            .map(|j| dotp(theta, &lin_features(sources.label(j), sources.x(j))))
            .collect();
        total += -dotp(theta, &fp) + log_mean_exp(&scores);
    }
    total / target.len() as f64
}

/// Central differences of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<Label> {
    (0..n)
        .map(|_| if rng.random::<bool>() { Label::Pos } else { Label::Neg })
        .collect()
}

/// Dataset with standard normal inputs and fair coin labels.
pub fn random_dataset<R: Rng>(rng: &mut R, dim: usize, n: usize) -> LabeledDataset<f64> {
    let labels = random_labels(rng, n);
    let rows = (0..n).map(|_| normal_vec(rng, dim)).collect();
    LabeledDataset::from_rows(dim, labels, rows).unwrap()
}

/// Dataset on the integer lattice `{-2..=2}^dim`, so distance ties are common.
pub fn lattice_dataset<R: Rng>(rng: &mut R, dim: usize, n: usize) -> LabeledDataset<f64> {
    let labels = random_labels(rng, n);
    let rows = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2i32..=2) as f64).collect())
        .collect();
    LabeledDataset::from_rows(dim, labels, rows).unwrap()
}

/// A target sample and a source sample in which every target input has
/// exactly `k` source rows at the same location (and no other source row
/// there). Returns the datasets and, per target row, its group of source rows.
pub fn paired_instance<R: Rng>(
    rng: &mut R,
    dim: usize,
    locations: usize,
    per_location: usize,
    k: usize,
) -> (LabeledDataset<f64>, LabeledDataset<f64>, Vec<Vec<usize>>) {
    let sites: Vec<Vec<f64>> = (0..locations).map(|_| normal_vec(rng, dim)).collect();
    let mut source = LabeledDataset::new(dim);
    let mut groups = Vec::new();
    for s in &sites {
        let mut g = Vec::new();
        for _ in 0..k {
            g.push(source.len());
            let y = if rng.random::<bool>() { Label::Pos } else { Label::Neg };
            source.push(y, s).unwrap();
        }
        groups.push(g);
    }
    let mut target = LabeledDataset::new(dim);
    let mut target_groups = Vec::new();
    for (s, g) in sites.iter().zip(&groups) {
        for _ in 0..per_location {
            let y = if rng.random::<bool>() { Label::Pos } else { Label::Neg };
            target.push(y, s).unwrap();
            target_groups.push(g.clone());
        }
    }
    (target, source, target_groups)
}

/// Mean of `exp(θᵀf)` over a group of source rows.
pub fn grouped_normalizer(theta: &[f64], sources: &LabeledDataset<f64>, group: &[usize]) -> f64 {
    group
        .iter()
        .map(|&j| dotp(theta, &lin_features(sources.label(j), sources.x(j))).exp())
        .sum::<f64>()
        / group.len() as f64
}

/// Minimizer of the grouped objective plus `lambda ‖θ‖²` by damped Newton
/// iterations with an exact Hessian.
pub fn grouped_newton_fit(
    target: &LabeledDataset<f64>,
    sources: &LabeledDataset<f64>,
    groups: &[Vec<usize>],
    lambda: f64,
) -> Vec<f64> {
    let m = target.dim() + 1;
    let n = target.len() as f64;
    let value = |theta: &[f64]| -> f64 {
        let mut v = 0.0;
        for (i, g) in groups.iter().enumerate() {
            let fp = lin_features(target.label(i), target.x(i));
            let s: Vec<f64> = g
                .iter()
                .map(|&j| dotp(theta, &lin_features(sources.label(j), sources.x(j))))
                .collect();
            v += -dotp(theta, &fp) + log_mean_exp(&s);
        }
        v / n + lambda * dotp(theta, theta)
    };
    let mut theta = vec![0.0; m];
    for _ in 0..200 {
        let mut grad = vec![0.0; m];
        let mut hess = vec![vec![0.0; m]; m];
        for (i, g) in groups.iter().enumerate() {
            let fp = lin_features(target.label(i), target.x(i));
            let feats: Vec<Vec<f64>> = g
                .iter()
                .map(|&j| lin_features(sources.label(j), sources.x(j)))
                .collect();
            let s: Vec<f64> = feats.iter().map(|f| dotp(&theta, f)).collect();
            let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
            let z: f64 = w.iter().sum();
            let mut mean = vec![0.0; m];
            for (f, wi) in feats.iter().zip(&w) {
                for a in 0..m {
                    mean[a] += wi / z * f[a];
                }
            }
            for a in 0..m {
                grad[a] += (mean[a] - fp[a]) / n;
            }
            for (f, wi) in feats.iter().zip(&w) {
                for a in 0..m {
                    for b in 0..m {
                        hess[a][b] += wi / z * (f[a] - mean[a]) * (f[b] - mean[b]) / n;
                    }
                }
            }
        }
        for a in 0..m {
            grad[a] += 2.0 * lambda * theta[a];
            hess[a][a] += 2.0 * lambda;
        }
        if grad.iter().all(|g| g.abs() < 1e-13) {
            break;
        }
        let step = solve(hess, grad.clone());
        let f0 = value(&theta);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(x, s)| x - t * s).collect();
            if value(&cand) <= f0 + 1e-14 * f0.abs() || t < 1e-10 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    theta
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for cc in c..n {
                a[r][cc] -= f * a[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}
