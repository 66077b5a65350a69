//! Transfer learning through class-posterior ratio estimation.
//!
//! A target task with few labelled samples (`D_P`) is adapted from a source
//! task with many (`D_Q`) by fitting the ratio `p(y|x) / q(y|x)` separately
//! from the source classifier `q̂(y|x)` and multiplying the two at prediction
//! time. The ratio is a log-linear model `exp(θᵀf(y,x))` whose normalizer is
//! approximated during training by a k-nearest-neighbour average over the
//! source sample, which keeps the negative likelihood convex in `θ`.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the
//! experiment harness use.

// `!(x > 0)` style checks are deliberate: NaN has to fail them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod classifier;
pub mod composite;
pub mod dataset;
pub mod error;
pub mod features;
pub mod generators;
pub mod knn;
pub mod optim;
pub mod quadrature;
pub mod ratio;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use baselines::{fit_joint, predict_joint, JointModel, JointOptions};
pub use classifier::{
    fit_kernel_logreg, fit_logreg, KernelLogReg, KernelOptions, LinearLogReg, LogRegOptions, Posterior, SourceModel,
};

pub use composite::{estimate_kl, evaluate, CompositeModel, Evaluation};
pub use dataset::{CsvSpec, Label, LabeledDataset};
pub use features::FeatureMap;
pub use knn::{KnnIndex, NeighborList};
pub use optim::{Lbfgs, Minimum};
pub use ratio::{
    fit, select_k, select_lambda, FitOptions, FitReport, NeighborCache, Penalty, RatioModel, SelectKOptions,
};

/// Double-precision dataset.
pub type Dataset = LabeledDataset<f64>;
/// Double-precision exact k-NN index.
pub type Index = KnnIndex<f64>;
/// Double-precision posterior-ratio model.
pub type Ratio = RatioModel<f64>;
/// Double-precision composite (ratio × source) classifier.
pub type Composite = CompositeModel<f64>;
/// Double-precision linear logistic regression.
pub type LogReg = LinearLogReg<f64>;
/// Double-precision RBF kernel logistic regression.
pub type KernelLogReg64 = KernelLogReg<f64>;
/// Double-precision source classifier (either kind).
pub type Source = SourceModel<f64>;
/// Double-precision joint parameter-decomposition baseline.
pub type Joint = JointModel<f64>;
