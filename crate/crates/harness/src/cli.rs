//! `posterior-ratio` subcommands. Exit status: 0 on success, 1 for usage
//! errors, 2 when the command itself fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use posterior_ratio::classifier::{fit_kernel_logreg, fit_logreg, select_l2, KernelOptions, LogRegOptions};
use posterior_ratio::dataset::load_csv;
use posterior_ratio::ratio::{default_lambda_grid, FitReport};
use posterior_ratio::{
    estimate_kl, Composite, CompositeModel, CsvSpec, Dataset, FeatureMap, KnnIndex, Penalty, Posterior, SourceModel,
};

use crate::config::{ExperimentConfig, ExperimentKind, KPolicy};
use crate::error::{read_file, HarnessError, Result};
use crate::experiments::fit_ratio;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "posterior-ratio",
    version,
    about = "Transfer learning by class-posterior ratio estimation"
)]
pub struct Cli {
    /// Seed for every randomized step (fold assignment, data generation).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel repetitions; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress and warnings to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the source classifier and the ratio model; write the bundled model.
    Fit(FitArgs),
    /// Posterior probabilities and labels for the rows of a CSV file.
    Predict(PredictArgs),
    /// Print the KL divergence estimate between target and source posteriors.
    Kl(RatioArgs),
    /// Select the neighbour count and print the selection trace.
    SelectK(SelectKArgs),
    /// Run a synthetic experiment: kl-convergence, joint-vs-separated or four-gaussian.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Target-task CSV (label, x1, ..., xd).
    #[arg(long)]
    pub target: PathBuf,
    /// Source-task CSV, same layout.
    #[arg(long)]
    pub source: PathBuf,
    /// The CSV files start with a header row.
    #[arg(long)]
    pub header: bool,
    /// Labels are written 0/1 instead of -1/+1.
    #[arg(long)]
    pub zero_one: bool,
}

impl DataArgs {
    fn spec(&self) -> CsvSpec {
        CsvSpec {
            has_header: self.header,
            zero_one_labels: self.zero_one,
        }
    }

    fn load(&self) -> Result<(Dataset, Dataset)> {
        let p: Dataset = load_csv(&self.target, self.spec())?;
        let q: Dataset = load_csv(&self.source, self.spec())?;
        Ok((p, q))
    }
}

#[derive(Debug, Args)]
pub struct RatioArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fixed neighbour count; selected by holdout MSE when absent.
    #[arg(long, conflicts_with = "schedule")]
    pub k: Option<usize>,
    /// Use k = ceil((ln n')^2) instead of selecting it.
    #[arg(long)]
    pub schedule: bool,
    /// Regularization weight(s); several values are cross-validated.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
    /// Regularizer exponent: `squared` for λ‖θ‖², `norm` for λ‖θ‖.
    #[arg(long, value_enum, default_value_t = PenaltyArg::Squared)]
    pub penalty: PenaltyArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    Squared,
    Norm,
}

impl From<PenaltyArg> for Penalty {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Squared => Penalty::Squared,
            PenaltyArg::Norm => Penalty::Norm,
        }
    }
}

impl RatioArgs {
    fn policy(&self) -> KPolicy {
        match (self.k, self.schedule) {
            (Some(k), _) => KPolicy::Fixed(k),
            (None, true) => KPolicy::Schedule,
            (None, false) => KPolicy::Heuristic,
        }
    }

    fn lambda_grid(&self) -> Vec<f64> {
        if self.lambda.is_empty() {
            default_lambda_grid()
        } else {
            self.lambda.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassifierKind {
    Linear,
    Kernel,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub ratio: RatioArgs,
    /// Source classifier family.
    #[arg(long, value_enum, default_value_t = ClassifierKind::Linear)]
    pub classifier: ClassifierKind,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the fit report JSON; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of inputs, one row per point.
    #[arg(long)]
    pub input: PathBuf,
    /// The first column of the input is a label and is ignored.
    #[arg(long)]
    pub labeled: bool,
    #[arg(long)]
    pub header: bool,
    /// Output CSV (`label,p_plus,p_minus`); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Normalize over the model's `k` nearest rows of this source CSV instead
    /// of over the source classifier. Such values need not sum to one.
    #[arg(long)]
    pub knn_source: Option<PathBuf>,
    /// The `--knn-source` labels are written 0/1.
    #[arg(long, requires = "knn_source")]
    pub zero_one: bool,
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Candidate neighbour counts; powers of two from 4 when absent.
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_parser = parse_kind)]
    pub name: ExperimentKind,
    /// Experiment config JSON; defaults for `name` when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<ExperimentKind, String> {
    ExperimentKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown experiment {s:?}; expected one of {}", names.join(", "))
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "info" } else { "error" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let seed = cli.seed.unwrap_or(0);
    pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(a, seed),
        Command::Predict(a) => cmd_predict(a),
        Command::Kl(a) => cmd_kl(a, seed),
        Command::SelectK(a) => cmd_select_k(a, seed),
        Command::Experiment(a) => cmd_experiment(a, cli.seed),
    })
}

fn report_json(report: &FitReport<f64>, lambda: f64) -> serde_json::Value {
    json!({
        "version": 1,
        "k": report.k,
        "lambda": lambda,
        "final_objective": report.final_objective,
        "regularized_objective": report.regularized_objective,
        "kl_estimate": estimate_kl(report.final_objective),
        "grad_norm": report.grad_norm,
        "iterations": report.iterations,
        "converged": report.converged,
        "k_trace": report.k_trace.iter().map(|t| json!({"round": t.round, "k": t.k, "mse": t.mse})).collect::<Vec<_>>(),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| HarnessError::File {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_fit(a: &FitArgs, seed: u64) -> Result<()> {
    let (p, q) = a.ratio.data.load()?;
    let source = match a.classifier {
        ClassifierKind::Linear => {
            let l2 = select_l2(&q, &[1e-4, 1e-3, 1e-2, 1e-1], 5)?;
            SourceModel::Linear(fit_logreg(&q, &LogRegOptions::with_l2(l2))?.0)
        }
        ClassifierKind::Kernel => SourceModel::Kernel(fit_kernel_logreg(&q, &KernelOptions::default())?.0),
    };
    let map = FeatureMap::linear(q.dim());
    let (ratio, report) = fit_ratio(
        &p,
        &q,
        &map,
        &a.ratio.policy(),
        &a.ratio.lambda_grid(),
        a.ratio.penalty.into(),
        seed,
    )?;
    let lambda = ratio.lambda;
    let model = CompositeModel::new(ratio, source)?;
    emit(Some(&a.out), &(model.to_json()? + "\n"))?;
    let rep = serde_json::to_string_pretty(&report_json(&report, lambda))? + "\n";
    emit(a.report.as_deref(), &rep)
}

/// Reads unlabeled rows of equal width.
/// Numeric rows of `path`, dropping the first column when `labeled` (the
/// label is never parsed, so any encoding passes).
fn read_inputs(path: &Path, header: bool, labeled: bool) -> Result<Vec<Vec<f64>>> {
    let text = read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = rec?
            .iter()
            .skip(usize::from(labeled))
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| posterior_ratio::Error::MalformedRow {
                row: i + 1,
                reason: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = Composite::from_json(&read_file(&a.model)?)?;
    let inputs = read_inputs(&a.input, a.header, a.labeled)?;
    let index = match &a.knn_source {
        Some(path) => {
            let spec = CsvSpec {
                has_header: a.header,
                zero_one_labels: a.zero_one,
            };
            let q: Dataset = load_csv(path, spec)?;
            Some(KnnIndex::build(&q)?)
        }
        None => None,
    };
    let mut buf = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record(["label", "p_plus", "p_minus"])?;
        for x in &inputs {
            let (pp, pm) = match &index {
                Some(index) => model.posterior_knn(x, index, model.ratio.k.min(index.len()))?,
                None => model.posterior(x)?,
            };
            let label = if pp >= pm { 1 } else { -1 };
            wtr.serialize((label, pp, pm))?;
        }
        wtr.flush()?;
    }
    emit(
        a.out.as_deref(),
        std::str::from_utf8(&buf).expect("csv output is utf-8"),
    )
}

fn cmd_kl(a: &RatioArgs, seed: u64) -> Result<()> {
    let (p, q) = a.data.load()?;
    let map = FeatureMap::linear(q.dim());
    let (_, report) = fit_ratio(&p, &q, &map, &a.policy(), &a.lambda_grid(), a.penalty.into(), seed)?;
    println!("{}", estimate_kl(report.final_objective));
    Ok(())
}

fn cmd_select_k(a: &SelectKArgs, seed: u64) -> Result<()> {
    use posterior_ratio::ratio::{default_k_grid, schedule_k, select_k, select_lambda, SelectKOptions};
    use posterior_ratio::FitOptions;

    let (p, q) = a.data.load()?;
    let map = FeatureMap::linear(q.dim());
    let grid = if a.lambda.is_empty() {
        default_lambda_grid()
    } else {
        a.lambda.clone()
    };
    let lambda = if grid.len() > 1 {
        let k0 = schedule_k(q.len()).min(q.len());
        select_lambda(&p, &q, k0, &grid, &map, &FitOptions::with_lambda(grid[0]))?
    } else {
        grid[0]
    };
    let k_grid = if a.k_grid.is_empty() {
        default_k_grid(q.len())
    } else {
        a.k_grid.clone()
    };
    let (_, report) = select_k(
        &p,
        &q,
        &map,
        &FitOptions::with_lambda(lambda),
        &SelectKOptions::new(k_grid, seed),
    )?;
    println!("{}", serde_json::to_string_pretty(&report_json(&report, lambda))?);
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path, Some(a.name))?,
        None => ExperimentConfig::defaults(a.name),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    let out = crate::run_to_dir(&cfg)?;
    println!(
        "{}: {} records, {} failures -> {}",
        cfg.experiment,
        out.records.len(),
        out.failures.len(),
        cfg.output_dir.display()
    );
    Ok(())
}
