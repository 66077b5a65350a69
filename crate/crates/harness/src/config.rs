//! Experiment configuration. Files may omit any field except `experiment`;
//! missing values are filled from per-experiment defaults and the resolved
//! configuration is written next to the results.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{read_file, HarnessError, Result};
use posterior_ratio::ratio::default_lambda_grid;
use posterior_ratio::Penalty;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    KlConvergence,
    JointVsSeparated,
    FourGaussian,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 3] = [Self::KlConvergence, Self::JointVsSeparated, Self::FourGaussian];

    pub fn name(self) -> &'static str {
        match self {
            Self::KlConvergence => "kl-convergence",
            Self::JointVsSeparated => "joint-vs-separated",
            Self::FourGaussian => "four-gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the neighbour count of the ratio fit is chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    /// Alternating holdout-MSE selection over the default grid.
    Heuristic,
    /// `k = ⌈(ln n')²⌉`.
    Schedule,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: ExperimentKind,
    pub n_grid: Vec<usize>,
    pub n_q: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub k_policy: KPolicy,
    pub lambda_grid: Vec<f64>,
    /// Squared (default) or plain norm regularizer on the ratio parameters.
    pub penalty: Penalty,
    pub output_dir: PathBuf,
    /// Balancing weights of the joint baseline.
    pub gamma_grid: Vec<f64>,
    /// Symmetric penalty of the joint baseline.
    pub joint_l2: f64,
    /// Candidate penalties for the linear source classifier (5-fold CV).
    pub classifier_l2_grid: Vec<f64>,
    pub holdout_size: usize,
    pub test_size: usize,
    /// Points per axis of the posterior mesh.
    pub mesh_size: usize,
    /// Vertical class offset of the four-Gaussian target.
    pub shift: f64,
    /// Candidate penalties for the kernel classifiers (5-fold CV).
    pub kernel_l2_grid: Vec<f64>,
    /// Centers used by the source kernel classifier; all rows when absent.
    pub kernel_centers: Option<usize>,
}

/// The on-disk form: everything but `experiment` optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: Option<u32>,
    experiment: Option<ExperimentKind>,
    n_grid: Option<Vec<usize>>,
    n_q: Option<usize>,
    repetitions: Option<usize>,
    seed: Option<u64>,
    k_policy: Option<KPolicy>,
    lambda_grid: Option<Vec<f64>>,
    penalty: Option<Penalty>,
    output_dir: Option<PathBuf>,
    gamma_grid: Option<Vec<f64>>,
    joint_l2: Option<f64>,
    classifier_l2_grid: Option<Vec<f64>>,
    holdout_size: Option<usize>,
    test_size: Option<usize>,
    mesh_size: Option<usize>,
    shift: Option<f64>,
    kernel_l2_grid: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "present")]
    kernel_centers: Option<Option<usize>>,
}

/// Keeps an explicit `null` apart from a missing field.
fn present<'de, D: serde::Deserializer<'de>, T: Deserialize<'de>>(d: D) -> std::result::Result<Option<T>, D::Error> {
    T::deserialize(d).map(Some)
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let n_grid = match kind {
            ExperimentKind::KlConvergence => vec![10, 50, 250, 500],
            ExperimentKind::JointVsSeparated => vec![10, 50, 250],
            ExperimentKind::FourGaussian => vec![40],
        };
        Self {
            version: CONFIG_VERSION,
            experiment: kind,
            n_grid,
            n_q: 5000,
            repetitions: 25,
            seed: 0,
            k_policy: KPolicy::Heuristic,
            lambda_grid: default_lambda_grid(),
            penalty: Penalty::Squared,
            output_dir: PathBuf::from(format!("results/{kind}")),
            gamma_grid: vec![0.1, 1.0, 10.0],
            joint_l2: 1e-4,
            classifier_l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1],
            holdout_size: 1000,
            test_size: 5000,
            mesh_size: 200,
            shift: posterior_ratio::generators::DEFAULT_SHIFT,
            kernel_l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1],
            kernel_centers: Some(500),
        }
    }

    /// Parses a config document. `kind` fills in `experiment` when the file
    /// leaves it out and must agree with it otherwise.
    pub fn from_json(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)?;
        let experiment = match (raw.experiment, kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(HarnessError::Config(format!("config is for experiment {a}, not {b}")))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(HarnessError::Config("missing field `experiment`".into())),
        };
        let d = Self::defaults(experiment);
        let cfg = Self {
            version: raw.version.unwrap_or(CONFIG_VERSION),
            experiment,
            n_grid: raw.n_grid.unwrap_or(d.n_grid),
            n_q: raw.n_q.unwrap_or(d.n_q),
            repetitions: raw.repetitions.unwrap_or(d.repetitions),
            seed: raw.seed.unwrap_or(d.seed),
            k_policy: raw.k_policy.unwrap_or(d.k_policy),
            lambda_grid: raw.lambda_grid.unwrap_or(d.lambda_grid),
            penalty: raw.penalty.unwrap_or(d.penalty),
            output_dir: raw.output_dir.unwrap_or(d.output_dir),
            gamma_grid: raw.gamma_grid.unwrap_or(d.gamma_grid),
            joint_l2: raw.joint_l2.unwrap_or(d.joint_l2),
            classifier_l2_grid: raw.classifier_l2_grid.unwrap_or(d.classifier_l2_grid),
            holdout_size: raw.holdout_size.unwrap_or(d.holdout_size),
            test_size: raw.test_size.unwrap_or(d.test_size),
            mesh_size: raw.mesh_size.unwrap_or(d.mesh_size),
            shift: raw.shift.unwrap_or(d.shift),
            kernel_l2_grid: raw.kernel_l2_grid.unwrap_or(d.kernel_l2_grid),
            kernel_centers: raw.kernel_centers.unwrap_or(d.kernel_centers),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        Self::from_json(&read_file(path)?, kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(posterior_ratio::Error::UnsupportedVersion(self.version).into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.n_grid.is_empty() || self.lambda_grid.is_empty() {
            return bad("n_grid and lambda_grid must be non-empty");
        }
        if self.n_grid.contains(&0) || self.n_q == 0 {
            return bad("sample sizes must be at least 1");
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda values must be finite and >= 0");
        }
        if let KPolicy::Fixed(0) = self.k_policy {
            return bad("fixed k must be at least 1");
        }
        match self.experiment {
            ExperimentKind::KlConvergence => {}
            ExperimentKind::JointVsSeparated => {
                if self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                    return bad("gamma_grid must be non-empty with finite values > 0");
                }
                if !(self.joint_l2 > 0.0) {
                    return bad("joint_l2 must be > 0");
                }
                if self.classifier_l2_grid.is_empty() || self.classifier_l2_grid.iter().any(|l| !(*l >= 0.0)) {
                    return bad("classifier_l2_grid must be non-empty with values >= 0");
                }
                if self.holdout_size == 0 {
                    return bad("holdout_size must be at least 1");
                }
            }
            ExperimentKind::FourGaussian => {
                if self.n_grid.iter().any(|&n| n < 4) || self.n_q < 4 {
                    return bad("four-gaussian sample sizes must be at least 4");
                }
                if self.test_size == 0 || self.mesh_size < 2 {
                    return bad("test_size must be >= 1 and mesh_size >= 2");
                }
                if !(self.shift >= 0.0 && self.shift.is_finite()) {
                    return bad("shift must be finite and >= 0");
                }
                if self.kernel_l2_grid.is_empty() || self.kernel_l2_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return bad("kernel_l2_grid must be non-empty with finite values > 0");
                }
                if self.kernel_centers == Some(0) {
                    return bad("kernel_centers must be at least 1");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "kl-convergence"}"#, None).unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults(ExperimentKind::KlConvergence));
        let cfg = ExperimentConfig::from_json("{}", Some(ExperimentKind::FourGaussian)).unwrap();
        assert_eq!(cfg.n_grid, vec![40]);
    }

    #[test]
    fn resolved_config_roundtrips() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::JointVsSeparated);
        cfg.k_policy = KPolicy::Fixed(16);
        cfg.kernel_centers = None;
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap(), None).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"experiment": "kl-convergence", "repetitions": 0}"#,
            r#"{"experiment": "kl-convergence", "n_grid": []}"#,
            r#"{"experiment": "kl-convergence", "version": 2}"#,
            r#"{"experiment": "kl-convergence", "bogus": 1}"#,
            r#"{"experiment": "joint-vs-separated", "gamma_grid": [0.0]}"#,
            r#"{"experiment": "nope"}"#,
            r#"{}"#,
        ] {
            assert!(ExperimentConfig::from_json(text, None).is_err(), "{text}");
        }
        let mismatch = ExperimentConfig::from_json(
            r#"{"experiment": "kl-convergence"}"#,
            Some(ExperimentKind::FourGaussian),
        );
        assert!(mismatch.is_err());
    }

    #[test]
    fn k_policy_forms() {
        let p: KPolicy = serde_json::from_str(r#"{"fixed": 8}"#).unwrap();
        assert_eq!(p, KPolicy::Fixed(8));
        let p: KPolicy = serde_json::from_str(r#""schedule""#).unwrap();
        assert_eq!(p, KPolicy::Schedule);
    }
}
