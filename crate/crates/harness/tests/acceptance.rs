//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use oracle::*;
use posterior_ratio::dataset::save_csv;
use posterior_ratio::generators::{sample_gaussian_pair, SOURCE_MEAN, TARGET_MEAN};
use posterior_ratio::ratio::{fit_cache, gradient, objective};
use posterior_ratio::rng::{stream, Stream};
use posterior_ratio::{estimate_kl, Dataset, FeatureMap, FitOptions, KnnIndex, NeighborCache};
use posterior_ratio_harness::experiments::fit_ratio;
use posterior_ratio_harness::record::{mean_se, values, RunRecord};
use posterior_ratio_harness::{run, ExperimentConfig, ExperimentKind, KPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, budget_s: u64) -> bool {
    elapsed <= Duration::from_secs(budget_s)
}

fn cache_for(target: &Dataset, sources: &Dataset, k: usize) -> NeighborCache<f64> {
    let map = FeatureMap::linear(target.dim());
    NeighborCache::build(target, &KnnIndex::build(sources).unwrap(), &map, k).unwrap()
}

/// Small random instance: `d ≤ 5`, `n ≤ 20`, `k ≤ 5`, `k ≤ n' ≤ 20`.
fn small_instance(rng: &mut ChaCha8Rng) -> (Dataset, Dataset, usize) {
    let d = rng.random_range(1..=5);
    let n = rng.random_range(1..=20);
    let k = rng.random_range(1..=5);
    let n_q = rng.random_range(k..=20);
    let target = random_dataset(rng, d, n);
    let sources = random_dataset(rng, d, n_q);
    (target, sources, k)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (target, sources, k) = small_instance(&mut rng);
        let cache = cache_for(&target, &sources, k);
        let theta = normal_vec(&mut rng, target.dim() + 1);
        let g = gradient(&theta, &cache).unwrap();
        let fd = finite_difference(|t| objective(t, &cache).unwrap(), &theta, 1e-5);
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-6);
        worst = worst.max(err / scale);
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-6 && within(t, 10),
        format!(
            "200 instances, max relative error {worst:.2e} (< 1e-6), {:.2} s (< 10 s)",
            t.as_secs_f64()
        ),
    )
}

fn zero_point() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut nonzero = 0;
    for _ in 0..50 {
        let (target, sources, k) = small_instance(&mut rng);
        let cache = cache_for(&target, &sources, k);
        if objective(&vec![0.0; target.dim() + 1], &cache).unwrap() != 0.0 {
            nonzero += 1;
        }
    }
    outcome(nonzero == 0, format!("50 datasets, {nonzero} with objective(0) != 0"))
}

fn convexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (target, sources, k) = small_instance(&mut rng);
        let cache = cache_for(&target, &sources, k);
        let m = target.dim() + 1;
        let (a, b) = (normal_vec(&mut rng, m), normal_vec(&mut rng, m));
        let t: f64 = rng.random();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = objective(&mid, &cache).unwrap();
        let rhs = t * objective(&a, &cache).unwrap() + (1.0 - t) * objective(&b, &cache).unwrap();
        worst = worst.max(lhs - rhs);
    }
    outcome(
        worst <= 1e-9,
        format!("1000 triples, max violation {worst:.2e} (<= 1e-9)"),
    )
}

fn exact_pairing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst_n, mut worst_theta) = (0.0f64, 0.0f64);
    let mut unconverged = 0;
    for _ in 0..50 {
        let dim = rng.random_range(1..=3);
        let sites = rng.random_range(3..=8);
        let per = rng.random_range(1..=4);
        let k = rng.random_range(2..=5);
        let (target, sources, groups) = paired_instance(&mut rng, dim, sites, per, k);
        let cache = cache_for(&target, &sources, k);
        let theta = normal_vec(&mut rng, dim + 1);
        for (i, g) in groups.iter().enumerate() {
            let want = grouped_normalizer(&theta, &sources, g);
            worst_n = worst_n.max((cache.normalizer(&theta, i) - want).abs() / want.max(1.0));
        }
        let lambda = 1e-2;
        let (model, rep) = fit_cache(&cache, &FeatureMap::linear(dim), &FitOptions::with_lambda(lambda)).unwrap();
        unconverged += usize::from(!rep.converged);
        let want = grouped_newton_fit(&target, &sources, &groups, lambda);
        for (a, b) in model.theta.iter().zip(&want) {
            worst_theta = worst_theta.max((a - b).abs());
        }
    }
    outcome(
        worst_n <= 1e-12 && worst_theta < 1e-6 && unconverged == 0,
        format!("50 instances, normalizer error {worst_n:.2e} (<= 1e-12), theta error {worst_theta:.2e} (< 1e-6)"),
    )
}

fn knn_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut mismatches = 0;
    let mut queries = 0;
    for cloud in 0..100 {
        let dim = if cloud % 2 == 0 { 2 } else { 5 };
        let n = rng.random_range(1..=300);
        // every other pair of clouds sits on a small lattice, so ties are everywhere
        let lattice = cloud % 4 >= 2;
        let pts = if lattice {
            lattice_dataset(&mut rng, dim, n)
        } else {
            random_dataset(&mut rng, dim, n)
        };
        let index = KnnIndex::build(&pts).unwrap();
        for _ in 0..20 {
            let q = if lattice {
                (0..dim).map(|_| rng.random_range(-2i32..=2) as f64).collect()
            } else {
                normal_vec(&mut rng, dim)
            };
            let k = rng.random_range(1..=n + 2);
            let got = index.query(&q, k).unwrap();
            queries += 1;
            if got.indices != flat_knn(&pts, &q, k) {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("100 clouds (2-D and 5-D, half on a tie-heavy lattice), {mismatches}/{queries} queries differ from the flat scan"))
}

/// Both samples from the same overlapping two-class model; `mean` sets the
/// class separation.
fn same_distribution_run(mean: f64) -> (f64, f64) {
    let map = FeatureMap::linear(1);
    let (mut norm, mut kl) = (0.0, 0.0);
    for seed in 0..10u64 {
        let target: Dataset = sample_gaussian_pair(2000, mean, &mut stream(seed, Stream::Target));
        let sources: Dataset = sample_gaussian_pair(2000, mean, &mut stream(seed, Stream::Source));
        let (model, report) = fit_ratio(
            &target,
            &sources,
            &map,
            &KPolicy::Heuristic,
            &[1e-3],
            Default::default(),
            seed,
        )
        .unwrap();
        norm += model.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        kl += estimate_kl(report.final_objective);
    }
    (norm / 10.0, kl / 10.0)
}

fn same_distribution() -> (Outcome, String) {
    let start = Instant::now();
    let (norm, kl) = same_distribution_run(1.0);
    let t = start.elapsed();
    let main = outcome(
        norm < 0.1 && kl.abs() < 0.02 && within(t, 60),
        format!("class means ±1, n = n' = 2000, λ = 1e-3, 10 seeds: mean ‖θ‖ {norm:.4} (< 0.1), mean KL {kl:.4} (|.| < 0.02), {:.1} s (< 60 s)", t.as_secs_f64()),
    );
    let (norm2, kl2) = same_distribution_run(SOURCE_MEAN);
    let note =
        format!("same check with class means ±{SOURCE_MEAN} (better separated): mean ‖θ‖ {norm2:.4}, mean KL {kl2:.4}");
    (main, note)
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Expected conditional KL of the Gaussian-shift setup by a fixed-step
/// trapezoid rule on [-15, 15].
fn shift_kl_by_trapezoid() -> f64 {
    let pdf = |x: f64, m: f64| (-(x - m) * (x - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, b, steps) = (-15.0, 15.0, 300_000);
    let h = (b - a) / steps as f64;
    let mut total = 0.0;
    for i in 0..=steps {
        let x = a + i as f64 * h;
        let px = 0.5 * pdf(x, TARGET_MEAN) + 0.5 * pdf(x, -TARGET_MEAN);
        let (sp, sq) = (2.0 * TARGET_MEAN * x, 2.0 * SOURCE_MEAN * x);
        let mut kl = 0.0;
        for s in [1.0, -1.0] {
            let lp = log_sigmoid(s * sp);
            kl += lp.exp() * (lp - log_sigmoid(s * sq));
        }
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        total += w * px * kl;
    }
    total * h
}

fn kl_convergence() -> Outcome {
    let truth = shift_kl_by_trapezoid();
    let start = Instant::now();
    let cfg = ExperimentConfig::defaults(ExperimentKind::KlConvergence);
    let out = run(&cfg).unwrap();
    let t = start.elapsed();
    let recorded = out
        .records
        .iter()
        .find(|r| r.metric == "kl_true")
        .map(|r| r.value)
        .unwrap_or(f64::NAN);
    let truth_ok = (recorded - truth).abs() < 1e-8;
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        let est = values(&out.records, "proposed", n, "kl_estimate");
        let err: Vec<f64> = est.iter().map(|v| (v - truth).abs()).collect();
        let (m, se) = mean_se(&err);
        rows.push((n, m, se, mean_se(&est).0, est.len()));
    }
    let complete = rows.iter().all(|r| r.4 == cfg.repetitions) && out.failures.is_empty();
    let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1 + w[0].2.max(w[1].2));
    let last = rows.last().unwrap();
    let rel = (last.3 - truth).abs() / truth;
    let trend: Vec<String> = rows
        .iter()
        .map(|r| format!("n={}: {:.4}±{:.4}", r.0, r.1, r.2))
        .collect();
    outcome(
        truth_ok && complete && monotone && rel <= 0.2 && within(t, 600),
        format!(
            "truth {truth:.6} (recorded {recorded:.6}); mean |error| {} ({}); n=500 mean estimate {:.5}, {:.1}% off (<= 20%); {:.0} s (< 600 s)",
            trend.join(", "),
            if monotone { "non-increasing within 1 SE" } else { "NOT non-increasing" },
            last.3,
            100.0 * rel,
            t.as_secs_f64()
        ),
    )
}

fn group_mean(records: &[RunRecord], method: &str, n: usize, metric: &str) -> (f64, f64, usize) {
    let v = values(records, method, n, metric);
    let (m, se) = mean_se(&v);
    (m, se, v.len())
}

fn joint_vs_separated() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::JointVsSeparated);
    cfg.n_grid = vec![10];
    let out = run(&cfg).unwrap();
    let t = start.elapsed();
    let metric = "neg_holdout_loglik";
    let (prop, prop_se, count) = group_mean(&out.records, "proposed", 10, metric);
    let joint: Vec<(f64, f64)> = cfg
        .gamma_grid
        .iter()
        .map(|&g| {
            (
                g,
                group_mean(
                    &out.records,
                    &posterior_ratio_harness::experiments::joint_method(g),
                    10,
                    metric,
                )
                .0,
            )
        })
        .collect();
    let hi = joint.iter().map(|j| j.1).fold(f64::NEG_INFINITY, f64::max);
    let best = joint.iter().map(|j| j.1).fold(f64::INFINITY, f64::min);
    let spread = hi - best;
    let listed: Vec<String> = joint.iter().map(|(g, m)| format!("γ={g}: {m:.4}")).collect();
    outcome(
        count == cfg.repetitions && spread > prop_se && prop <= best + prop_se && within(t, 300),
        format!(
            "n=10, {count} seeds: joint {}; spread {spread:.4} vs proposed SE {prop_se:.4} (needs >); proposed mean {prop:.4} vs best joint + SE {:.4} (needs <=); {:.0} s (< 300 s)",
            listed.join(", "),
            best + prop_se,
            t.as_secs_f64()
        ),
    )
}

fn four_gaussian() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::defaults(ExperimentKind::FourGaussian);
    let out = run(&cfg).unwrap();
    let t = start.elapsed();
    let (c, _, nc) = group_mean(&out.records, "composite", 40, "miss_rate");
    let (p, _, np) = group_mean(&out.records, "logi-p", 40, "miss_rate");
    let (q, _, nq) = group_mean(&out.records, "logi-q", 40, "miss_rate");
    let complete = [nc, np, nq].iter().all(|&v| v == cfg.repetitions);
    let meshes_ok = out.meshes.len() == 3 && out.meshes.iter().all(|m| m.rows.len() == 200 * 200);
    let pass = complete && meshes_ok && c < p && c < q && c <= 0.11 && p >= c + 0.02 && q >= c + 0.02 && within(t, 600);
    outcome(
        pass,
        format!(
            "n=40, 25 seeds: miss-rate composite {:.2}%, logi-p {:.2}%, logi-q {:.2}% (composite lowest, <= 11%, baselines >= composite + 2 points); {} meshes of 200x200; {:.0} s (< 600 s)",
            100.0 * c,
            100.0 * p,
            100.0 * q,
            out.meshes.len(),
            t.as_secs_f64()
        ),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_posterior-ratio")
}

fn run_bin(args: &[&str]) -> bool {
    Command::new(bin())
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "config.json")
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    for kind in ExperimentKind::ALL {
        let mut cfg = ExperimentConfig::defaults(kind);
        cfg.repetitions = 4;
        cfg.n_q = 1000;
        cfg.seed = 77;
        cfg.mesh_size = 40;
        cfg.test_size = 1000;
        cfg.holdout_size = 500;
        cfg.kernel_centers = Some(200);
        let cfg_path = root.path().join(format!("{kind}.json"));
        std::fs::write(&cfg_path, cfg.to_json().unwrap()).unwrap();
        let mut runs = Vec::new();
        for (i, threads) in ["1", "4", "1"].iter().enumerate() {
            let out = root.path().join(format!("{kind}-{i}"));
            let ok = run_bin(&[
                "experiment",
                kind.name(),
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ]);
            runs.push(if ok { dir_bytes(&out) } else { Vec::new() });
        }
        if runs[0].is_empty() || runs[0] != runs[1] || runs[0] != runs[2] {
            differing.push(kind.name());
        }
    }
    // single fits through the command line too
    let (p, q) = posterior_ratio::generators::gen_gaussian_shift::<f64>(50, 2000, 9).unwrap();
    let (pt, qt) = (root.path().join("p.csv"), root.path().join("q.csv"));
    save_csv(&p, &pt).unwrap();
    save_csv(&q, &qt).unwrap();
    let mut fits = Vec::new();
    for i in 0..2 {
        let m = root.path().join(format!("model{i}.json"));
        let r = root.path().join(format!("report{i}.json"));
        let ok = run_bin(&[
            "fit",
            "--target",
            pt.to_str().unwrap(),
            "--source",
            qt.to_str().unwrap(),
            "--out",
            m.to_str().unwrap(),
            "--report",
            r.to_str().unwrap(),
            "--seed",
            "5",
        ]);
        fits.push(if ok {
            (std::fs::read(&m).unwrap(), std::fs::read(&r).unwrap())
        } else {
            Default::default()
        });
    }
    if fits[0].0.is_empty() || fits[0] != fits[1] {
        differing.push("fit");
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "all three experiments rerun byte-identically with 1 and 4 threads; CLI fit reruns identical".into()
        } else {
            format!("outputs differ or runs failed: {differing:?}")
        },
    )
}

fn csv_ingestion() -> Outcome {
    // the real-data experiments need corpora that are not shipped; what is
    // checked here is that user CSVs with headers and 0/1 labels go through
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let write = |path: &Path, n: usize, shift: f64, rng: &mut ChaCha8Rng| {
        let mut text = String::from("label,f1,f2,f3\n");
        for _ in 0..n {
            let y = rng.random::<bool>();
            let s = if y { 1.0 } else { -1.0 };
            let x = normal_vec(rng, 3);
            text += &format!("{},{},{},{}\n", y as u8, x[0] + s, x[1] + shift * s, x[2]);
        }
        std::fs::write(path, text).unwrap();
    };
    let (pt, qt) = (root.path().join("p.csv"), root.path().join("q.csv"));
    write(&pt, 80, 0.5, &mut rng);
    write(&qt, 1500, 0.0, &mut rng);
    let model = root.path().join("m.json");
    let preds = root.path().join("pred.csv");
    let p = pt.to_str().unwrap();
    let q = qt.to_str().unwrap();
    let fitted = run_bin(&[
        "fit",
        "--target",
        p,
        "--source",
        q,
        "--header",
        "--zero-one",
        "--out",
        model.to_str().unwrap(),
        "--report",
        root.path().join("r.json").to_str().unwrap(),
    ]);
    let predicted = fitted
        && run_bin(&[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--input",
            p,
            "--header",
            "--labeled",
            "--out",
            preds.to_str().unwrap(),
        ]);
    let rows = std::fs::read_to_string(&preds)
        .map(|t| t.lines().count().saturating_sub(1))
        .unwrap_or(0);
    let kl = Command::new(bin())
        .args(["kl", "--target", p, "--source", q, "--header", "--zero-one"])
        .output()
        .ok()
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .and_then(|s| s.trim().parse::<f64>().ok());
    outcome(
        fitted && predicted && rows == 80 && kl.is_some_and(f64::is_finite),
        format!(
            "real-data experiments out of scope (corpora not shipped); 3-feature CSV with header and 0/1 labels: fit {}, predict {} rows, kl {:?}",
            if fitted { "ok" } else { "failed" },
            rows,
            kl
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {id:>2} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };
    report(1, "gradient vs finite differences", gradient_check());
    report(2, "zero-point identity", zero_point());
    report(3, "convexity probe", convexity());
    report(4, "exact-pairing oracle", exact_pairing());
    report(5, "k-NN exactness", knn_exactness());
    let (same, note) = same_distribution();
    report(6, "identical distributions", same);
    println!("             note: {note}");
    report(7, "KL convergence", kl_convergence());
    report(8, "joint vs separated", joint_vs_separated());
    report(9, "four-Gaussian transfer", four_gaussian());
    report(10, "deterministic reruns", determinism());
    report(11, "CSV ingestion", csv_ingestion());
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
