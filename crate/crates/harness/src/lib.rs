//! Seeded synthetic experiments and the `posterior-ratio` command line.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: data for
//! repetition `r` comes from substreams of `derive_seed(seed, r)`, results
//! are gathered in a fixed order, and floats are written in shortest
//! round-trip form, so reruns produce identical files at any thread count.

// `!(x > 0)` style checks are deliberate: NaN has to fail them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod output;
pub mod record;

pub use config::{ExperimentConfig, ExperimentKind, KPolicy};
pub use error::{HarnessError, Result};
pub use experiments::{
    fit_ratio, joint_method, run, run_four_gaussian, run_joint_vs_separated, run_kl_convergence, ExperimentOutput,
};
pub use record::{AggregateRow, RunFailure, RunRecord};

/// Runs `cfg` and writes its result files into `cfg.output_dir`.
pub fn run_to_dir(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let out = run(cfg)?;
    output::write_outputs(&out, &cfg.output_dir)?;
    Ok(out)
}
