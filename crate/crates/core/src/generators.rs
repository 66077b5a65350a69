//! Seeded synthetic datasets for the transfer experiments.
//!
//! * Gaussian shift (1-D): source `q(x|±1) = N(±2, 1)`, target
//!   `p(x|±1) = N(±1.5, 1)`. The class posteriors are `σ(4x)` and `σ(3x)`.
//! * Four Gaussians (2-D): source class `+1` at `(±3, 0)`, class `-1` at
//!   `(±1, 0)`, unit covariance, so the classes interleave along the first
//!   axis. The target moves class `+1` means up by `shift` and class `-1`
//!   means down by `shift` on the second axis.
//!
//! Classes are balanced with the extra sample going to `+1` for odd sizes;
//! row order is shuffled.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{stream, Stream};
use crate::{Error, Label, LabeledDataset, Result, Scalar};

pub const SOURCE_MEAN: f64 = 2.0;
pub const TARGET_MEAN: f64 = 1.5;

/// Component means `(x1, x2)` of the four-Gaussian source, per class.
pub const FOUR_GAUSSIAN_POS: [(f64, f64); 2] = [(-3.0, 0.0), (3.0, 0.0)];
pub const FOUR_GAUSSIAN_NEG: [(f64, f64); 2] = [(-1.0, 0.0), (1.0, 0.0)];

/// Target four-Gaussian shift used when none is configured.
pub const DEFAULT_SHIFT: f64 = 1.0;

/// `ceil(n / 2)` positives, the rest negative.
pub fn balanced_counts(n: usize) -> (usize, usize) {
    let pos = n.div_ceil(2);
    (pos, n - pos)
}

fn shuffled_labels<R: Rng>(n: usize, rng: &mut R) -> Vec<Label> {
    let (pos, neg) = balanced_counts(n);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Pos, pos)
        .chain(std::iter::repeat_n(Label::Neg, neg))
        .collect();
    labels.shuffle(rng);
    labels
}

/// `n` draws from the 1-D two-Gaussian model with class means `±mean`.
pub fn sample_gaussian_pair<T: Scalar, R: Rng>(n: usize, mean: f64, rng: &mut R) -> LabeledDataset<T> {
    let labels = shuffled_labels(n, rng);
    let mut ds = LabeledDataset::with_capacity(1, n);
    for label in labels {
        let z: f64 = rng.sample(StandardNormal);
        let x = label.sign::<f64>() * mean + z;
        ds.push(label, &[T::c(x)]).expect("finite draw");
    }
    ds
}

/// Target and source datasets of the 1-D Gaussian-shift setup.
pub fn gen_gaussian_shift<T: Scalar>(
    n_p: usize,
    n_q: usize,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    if n_p == 0 || n_q == 0 {
        return Err(Error::InvalidParameter("sample counts must be at least 1".into()));
    }
    let target = sample_gaussian_pair(n_p, TARGET_MEAN, &mut stream(seed, Stream::Target));
    let source = sample_gaussian_pair(n_q, SOURCE_MEAN, &mut stream(seed, Stream::Source));
    Ok((target, source))
}

/// `n` draws from the four-Gaussian model with vertical class shift `shift`
/// (`0` gives the source distribution). Each class splits evenly across its
/// two components, the first component taking the odd sample.
pub fn sample_four_gaussian<T: Scalar, R: Rng>(n: usize, shift: f64, rng: &mut R) -> LabeledDataset<T> {
    let (pos, neg) = balanced_counts(n);
    let mut slots: Vec<(Label, usize)> = Vec::with_capacity(n);
    for (label, count) in [(Label::Pos, pos), (Label::Neg, neg)] {
        let first = count.div_ceil(2);
        slots.extend(std::iter::repeat_n((label, 0), first));
        slots.extend(std::iter::repeat_n((label, 1), count - first));
    }
    slots.shuffle(rng);
    let mut ds = LabeledDataset::with_capacity(2, n);
    for (label, comp) in slots {
        let (m1, m2) = match label {
            Label::Pos => FOUR_GAUSSIAN_POS[comp],
            Label::Neg => FOUR_GAUSSIAN_NEG[comp],
        };
        let m2 = m2 + label.sign::<f64>() * shift;
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        ds.push(label, &[T::c(m1 + z1), T::c(m2 + z2)]).expect("finite draw");
    }
    ds
}

pub fn gen_four_gaussian<T: Scalar>(
    n_p: usize,
    n_q: usize,
    shift: f64,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    if n_p < 4 || n_q < 4 {
        return Err(Error::InvalidParameter("four-Gaussian sizes must be at least 4".into()));
    }
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::InvalidParameter(format!("shift must be >= 0, got {shift}")));
    }
    let target = sample_four_gaussian(n_p, shift, &mut stream(seed, Stream::Target));
    let source = sample_four_gaussian(n_q, 0.0, &mut stream(seed, Stream::Source));
    Ok((target, source))
}
