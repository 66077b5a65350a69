//! The three synthetic experiments. Each repetition draws its data from
//! substreams of `derive_seed(seed, rep)`, so repetitions are independent
//! and can run in any order or in parallel.

use rayon::prelude::*;

use posterior_ratio::classifier::{
    fit_kernel_logreg, fit_logreg, select_kernel_l2, select_l2, KernelLogReg, KernelOptions, LogRegOptions,
};
use posterior_ratio::generators::{
    gen_four_gaussian, gen_gaussian_shift, sample_four_gaussian, sample_gaussian_pair, TARGET_MEAN,
};
use posterior_ratio::quadrature::gaussian_shift_conditional_kl;
use posterior_ratio::ratio::{default_k_grid, schedule_k, select_k, select_lambda, FitReport};
use posterior_ratio::rng::{derive_seed, stream, Stream};
use posterior_ratio::{
    estimate_kl, evaluate, fit, fit_joint, CompositeModel, Dataset, FeatureMap, FitOptions, JointOptions, Penalty,
    Posterior, Ratio, SelectKOptions, SourceModel,
};

use crate::config::{ExperimentConfig, ExperimentKind, KPolicy};
use crate::mesh::{posterior_mesh, BoundingBox, Mesh};
use crate::record::{RunFailure, RunRecord};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub meshes: Vec<Mesh>,
}

pub fn run(cfg: &ExperimentConfig) -> crate::Result<ExperimentOutput> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::KlConvergence => run_kl_convergence(cfg),
        ExperimentKind::JointVsSeparated => run_joint_vs_separated(cfg),
        ExperimentKind::FourGaussian => run_four_gaussian(cfg),
    })
}

/// One `(n, repetition)` cell.
#[derive(Clone, Copy, Debug)]
struct Cell {
    n: usize,
    rep: usize,
    /// Reported seed of the repetition.
    seed: u64,
    /// Seed of this cell's data.
    data_seed: u64,
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &n in &cfg.n_grid {
        for rep in 0..cfg.repetitions {
            let seed = derive_seed(cfg.seed, rep as u64);
            out.push(Cell {
                n,
                rep,
                seed,
                data_seed: derive_seed(seed, n as u64),
            });
        }
    }
    out
}

/// Rows produced by one cell.
#[derive(Default)]
struct CellOutput {
    records: Vec<RunRecord>,
    failures: Vec<RunFailure>,
    meshes: Vec<Mesh>,
}

impl CellOutput {
    /// Records `metrics` for `method`, or one failure row when the method
    /// errored or produced a non-finite value.
    fn push(&mut self, cfg: &ExperimentConfig, cell: &Cell, method: &str, metrics: crate::Result<Vec<(&str, f64)>>) {
        let metrics = metrics.and_then(|m| match m.iter().find(|(_, v)| !v.is_finite()) {
            Some((name, v)) => Err(crate::HarnessError::Config(format!("{name} is not finite ({v})"))),
            None => Ok(m),
        });
        match metrics {
            Ok(m) => self.records.extend(m.into_iter().map(|(metric, value)| RunRecord {
                experiment: cfg.experiment.name().into(),
                method: method.into(),
                n: cell.n,
                n_q: cfg.n_q,
                seed: cell.seed,
                metric: metric.into(),
                value,
            })),
            Err(e) => {
                log::warn!("{} {method} n={} seed={}: {e}", cfg.experiment, cell.n, cell.seed);
                self.failures.push(RunFailure {
                    experiment: cfg.experiment.name().into(),
                    method: method.into(),
                    n: cell.n,
                    n_q: cfg.n_q,
                    seed: cell.seed,
                    message: e.to_string(),
                });
            }
        }
    }
}

/// Runs every cell in parallel and concatenates the outputs in cell order,
/// which is fixed by the config alone.
fn run_cells(cfg: &ExperimentConfig, body: impl Fn(&Cell) -> CellOutput + Sync) -> ExperimentOutput {
    let mut outputs: Vec<(usize, usize, CellOutput)> = cells(cfg).par_iter().map(|c| (c.n, c.rep, body(c))).collect();
    outputs.sort_by_key(|(n, rep, _)| (*n, *rep));
    let mut out = ExperimentOutput {
        config: cfg.clone(),
        records: Vec::new(),
        failures: Vec::new(),
        meshes: Vec::new(),
    };
    for (_, _, c) in outputs {
        out.records.extend(c.records);
        out.failures.extend(c.failures);
        out.meshes.extend(c.meshes);
    }
    out
}

/// Fits the ratio model with `λ` chosen by likelihood cross validation over
/// `lambda_grid` (used as is when it has one value) and `k` chosen by
/// `k_policy`. The CV step uses the schedule `k`
/// (or the fixed one) since `k` selection itself needs a fitted `θ`; the
/// heuristic then starts its search from that same `k`.
pub fn fit_ratio(
    target: &Dataset,
    sources: &Dataset,
    map: &FeatureMap,
    k_policy: &KPolicy,
    lambda_grid: &[f64],
    penalty: Penalty,
    seed: u64,
) -> posterior_ratio::Result<(Ratio, FitReport<f64>)> {
    if lambda_grid.is_empty() {
        return Err(posterior_ratio::Error::InvalidParameter("empty lambda grid".into()));
    }
    let k0 = match *k_policy {
        KPolicy::Fixed(k) => k,
        KPolicy::Schedule | KPolicy::Heuristic => schedule_k(sources.len()),
    }
    .min(sources.len());
    let base = FitOptions {
        penalty,
        ..FitOptions::with_lambda(lambda_grid[0])
    };
    let lambda = if lambda_grid.len() > 1 {
        select_lambda(target, sources, k0, lambda_grid, map, &base)?
    } else {
        lambda_grid[0]
    };
    let opts = FitOptions { lambda, ..base };
    match k_policy {
        KPolicy::Heuristic => {
            let so = SelectKOptions {
                start_k: Some(k0),
                ..SelectKOptions::new(default_k_grid(sources.len()), stream_seed(seed, Stream::Folds))
            };
            select_k(target, sources, map, &opts, &so)
        }
        _ => fit(target, sources, k0, map, &opts),
    }
}

fn stream_seed(seed: u64, s: Stream) -> u64 {
    derive_seed(seed, s as u64)
}

fn ratio_metrics(model: &Ratio, report: &FitReport<f64>) -> Vec<(&'static str, f64)> {
    vec![
        ("kl_estimate", estimate_kl(report.final_objective)),
        ("k", model.k as f64),
        ("lambda", model.lambda),
        ("converged", if report.converged { 1.0 } else { 0.0 }),
    ]
}

pub fn run_kl_convergence(cfg: &ExperimentConfig) -> ExperimentOutput {
    let truth = gaussian_shift_conditional_kl();
    let map = FeatureMap::linear(1);
    let mut out = run_cells(cfg, |cell| {
        let mut c = CellOutput::default();
        let result = gen_gaussian_shift::<f64>(cell.n, cfg.n_q, cell.data_seed)
            .and_then(|(p, q)| {
                fit_ratio(
                    &p,
                    &q,
                    &map,
                    &cfg.k_policy,
                    &cfg.lambda_grid,
                    cfg.penalty,
                    cell.data_seed,
                )
            })
            .map(|(model, report)| {
                let mut m = ratio_metrics(&model, &report);
                m.push(("abs_error", (m[0].1 - truth).abs()));
                m
            })
            .map_err(Into::into);
        c.push(cfg, cell, "proposed", result);
        c
    });
    out.records.insert(
        0,
        RunRecord {
            experiment: cfg.experiment.name().into(),
            method: "quadrature".into(),
            n: 0,
            n_q: cfg.n_q,
            seed: cfg.seed,
            metric: "kl_true".into(),
            value: truth,
        },
    );
    out
}

/// Borrows a fitted upstream model, turning its failure into this method's.
fn upstream<'a, M>(fitted: &'a posterior_ratio::Result<M>, what: &str) -> crate::Result<&'a M> {
    fitted
        .as_ref()
        .map_err(|e| crate::HarnessError::Config(format!("{what} failed: {e}")))
}

/// Method label of a joint-baseline row.
pub fn joint_method(gamma: f64) -> String {
    format!("joint[gamma={gamma}]")
}

fn eval_metrics<P: Posterior<f64>>(model: &P, test: &Dataset) -> crate::Result<Vec<(&'static str, f64)>> {
    let e = evaluate(model, test)?;
    Ok(vec![
        ("neg_holdout_loglik", e.neg_holdout_loglik),
        ("miss_rate", e.miss_rate),
    ])
}

pub fn run_joint_vs_separated(cfg: &ExperimentConfig) -> ExperimentOutput {
    let map = FeatureMap::linear(1);
    run_cells(cfg, |cell| {
        let mut c = CellOutput::default();
        let (p, q) = match gen_gaussian_shift::<f64>(cell.n, cfg.n_q, cell.data_seed) {
            Ok(d) => d,
            Err(e) => {
                c.push(cfg, cell, "data", Err(e.into()));
                return c;
            }
        };
        // fresh target sample, never used for fitting
        let holdout: Dataset = sample_gaussian_pair(
            cfg.holdout_size,
            TARGET_MEAN,
            &mut stream(cell.data_seed, Stream::Holdout),
        );

        let source = select_l2(&q, &cfg.classifier_l2_grid, 5)
            .and_then(|l2| fit_logreg(&q, &LogRegOptions::with_l2(l2)))
            .map(|(m, _)| m);
        let proposed = upstream(&source, "source classifier").and_then(|src| {
            let (ratio, report) = fit_ratio(
                &p,
                &q,
                &map,
                &cfg.k_policy,
                &cfg.lambda_grid,
                cfg.penalty,
                cell.data_seed,
            )?;
            let model = CompositeModel::new(ratio, SourceModel::Linear(src.clone()))?;
            let mut m = eval_metrics(&model, &holdout)?;
            m.extend(ratio_metrics(&model.ratio, &report).into_iter().skip(1));
            Ok(m)
        });
        c.push(cfg, cell, "proposed", proposed);
        for &gamma in &cfg.gamma_grid {
            let opts = JointOptions {
                l2: cfg.joint_l2,
                ..JointOptions::new(gamma)
            };
            let joint = fit_joint(&p, &q, &opts)
                .map_err(Into::into)
                .and_then(|(m, _)| eval_metrics(&m, &holdout));
            c.push(cfg, cell, &joint_method(gamma), joint);
        }
        let logi_q = source.map_err(Into::into).and_then(|m| eval_metrics(&m, &holdout));
        c.push(cfg, cell, "logi-q", logi_q);
        c
    })
}

/// Kernel logistic regression with `l2` cross-validated over `grid` (used as
/// is when it has one value).
fn fit_kernel_cv(
    data: &Dataset,
    grid: &[f64],
    max_centers: Option<usize>,
) -> posterior_ratio::Result<KernelLogReg<f64>> {
    let opts = KernelOptions {
        max_centers,
        ..KernelOptions::default()
    };
    let l2 = match grid {
        [l2] => *l2,
        _ => select_kernel_l2(data, grid, 5, &opts)?,
    };
    Ok(fit_kernel_logreg(data, &KernelOptions { l2, ..opts })?.0)
}

fn with_l2(mut metrics: Vec<(&'static str, f64)>, l2: f64) -> Vec<(&'static str, f64)> {
    metrics.push(("l2", l2));
    metrics
}

pub fn run_four_gaussian(cfg: &ExperimentConfig) -> ExperimentOutput {
    let map = FeatureMap::linear(2);
    run_cells(cfg, |cell| {
        let mut c = CellOutput::default();
        let (p, q) = match gen_four_gaussian::<f64>(cell.n, cfg.n_q, cfg.shift, cell.data_seed) {
            Ok(d) => d,
            Err(e) => {
                c.push(cfg, cell, "data", Err(e.into()));
                return c;
            }
        };
        let test: Dataset = sample_four_gaussian(cfg.test_size, cfg.shift, &mut stream(cell.data_seed, Stream::Test));
        let mesh_box = (cell.rep == 0).then(|| BoundingBox::of(&[&p, &q]));

        let logi_p = fit_kernel_cv(&p, &cfg.kernel_l2_grid, None);
        let logi_q = fit_kernel_cv(&q, &cfg.kernel_l2_grid, cfg.kernel_centers);
        let composite = upstream(&logi_q, "source classifier").and_then(|src| {
            let (ratio, report) = fit_ratio(
                &p,
                &q,
                &map,
                &cfg.k_policy,
                &cfg.lambda_grid,
                cfg.penalty,
                cell.data_seed,
            )?;
            Ok((CompositeModel::new(ratio, src)?, report))
        });

        match logi_p {
            Ok(m) => {
                c.push(cfg, cell, "logi-p", eval_metrics(&m, &test).map(|v| with_l2(v, m.l2)));
                if let Some(b) = &mesh_box {
                    c.meshes.push(posterior_mesh("logi-p", cell.n, &m, b, cfg.mesh_size));
                }
            }
            Err(e) => c.push(cfg, cell, "logi-p", Err(e.into())),
        }
        match &logi_q {
            Ok(m) => {
                c.push(cfg, cell, "logi-q", eval_metrics(m, &test).map(|v| with_l2(v, m.l2)));
                if let Some(b) = &mesh_box {
                    c.meshes.push(posterior_mesh("logi-q", cell.n, m, b, cfg.mesh_size));
                }
            }
            Err(e) => c.push(cfg, cell, "logi-q", Err(crate::HarnessError::Config(e.to_string()))),
        }
        match composite {
            Ok((m, report)) => {
                let metrics = eval_metrics(&m, &test).map(|mut v| {
                    v.extend(ratio_metrics(&m.ratio, &report).into_iter().skip(1));
                    v
                });
                c.push(cfg, cell, "composite", metrics);
                if let Some(b) = &mesh_box {
                    c.meshes.push(posterior_mesh("composite", cell.n, &m, b, cfg.mesh_size));
                }
            }
            Err(e) => c.push(cfg, cell, "composite", Err(e)),
        }
        c
    })
}
