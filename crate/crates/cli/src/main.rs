//! `dpca` command-line interface: fit, simulate, classify and bandwidth.

mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpca::classify::{evaluate_split, evaluate_split_cv, LabeledScores, LogisticOptions};
use dpca::dpca::{candidates, COV_CANDIDATES, COV_FOLDS, MEAN_CANDIDATES};
use dpca::fpca::{cv_bandwidth_cov, estimate_mean_and_derivative, pooled_observations, raw_covariances};
use dpca::io::{fmt_num, read_feature_csv, read_labels_csv, read_long_csv, write_fit_outputs};
use dpca::simlab::{run_benchmark, BenchmarkConfig, SimDesign, SimModel};
use dpca::smoothing::{gcv_bandwidth_1d, gcv_bandwidth_2d, GcvSelection};
use dpca::{fit_dpca, Bandwidth, DpcaConfig, Grid, KPolicy};
use serde_json::json;

use settings::Settings;

/// Failure with its exit code: 1 usage, 2 input, 3 computation.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    Compute(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Compute(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Compute(m) => m,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn compute_err(e: impl std::fmt::Display) -> Failure {
    Failure::Compute(e.to_string())
}

#[derive(Parser)]
#[command(name = "dpca", version, about = "Derivative principal component analysis for functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit FPCA and DPCA to a long-form CSV and export the components.
    Fit(FitArgs),
    /// Run the Monte Carlo RMISE benchmark on simulation design A or B.
    Simulate(SimulateArgs),
    /// Misclassification rates of logistic classifiers on FPC and DPC scores.
    Classify(ClassifyArgs),
    /// Print the bandwidth selection curves as CSV.
    Bandwidth(BandwidthArgs),
}

/// Options shared by every command that fits the model.
#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Key=value file with defaults for any long option; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of output grid points (at least 11).
    #[arg(long)]
    grid: Option<String>,
    /// gaussian or epanechnikov.
    #[arg(long)]
    kernel: Option<String>,
    /// Mean bandwidth, a number or "auto".
    #[arg(long = "h-mu")]
    h_mu: Option<String>,
    /// Covariance bandwidth, a number or "auto".
    #[arg(long = "h-cov")]
    h_cov: Option<String>,
    /// Automatic covariance bandwidth criterion: cv or gcv.
    #[arg(long = "cov-selector")]
    cov_selector: Option<String>,
    /// staged or direct estimation of the derivative surfaces.
    #[arg(long)]
    mode: Option<String>,
    /// FVE threshold in (0, 1] for choosing K.
    #[arg(long)]
    fve: Option<String>,
    /// Fixed number of components.
    #[arg(long = "K")]
    k: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Long-form CSV with header subject_id,time,value.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// A (sparse) or B (dense).
    #[arg(long)]
    design: Option<String>,
    /// Measurement error standard deviation.
    #[arg(long)]
    sigma: Option<String>,
    /// Subjects per replicate.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Long-form functional CSV; scores are computed by fitting the model.
    #[arg(long, conflicts_with = "features")]
    input: Option<PathBuf>,
    /// Precomputed scores with fpc_k and dpc_k columns, as written by `fit`.
    #[arg(long)]
    features: Option<PathBuf>,
    /// CSV with header subject_id,label and labels 0 or 1.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Training samples per random split.
    #[arg(long = "train-size")]
    train_size: Option<String>,
    /// Number of random splits.
    #[arg(long)]
    repeats: Option<String>,
    /// Folds for choosing K inside each training set.
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct BandwidthArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Bandwidth(a) => cmd_bandwidth(a),
    }
}

fn settings_for(model: &ModelArgs, extra: &[(&'static str, Option<String>)], allowed: &[&str]) -> CliResult<Settings> {
    let mut s = match &model.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let flags = [
        ("grid", &model.grid),
        ("kernel", &model.kernel),
        ("h-mu", &model.h_mu),
        ("h-cov", &model.h_cov),
        ("cov-selector", &model.cov_selector),
        ("mode", &model.mode),
        ("fve", &model.fve),
        ("K", &model.k),
        ("threads", &model.threads),
    ];
    for (key, value) in flags {
        s.set(key, value.clone());
    }
    for (key, value) in extra {
        s.set(key, value.clone());
    }
    s.check_keys(allowed)?;
    Ok(s)
}

const MODEL_KEYS: [&str; 9] = ["grid", "kernel", "h-mu", "h-cov", "cov-selector", "mode", "fve", "K", "threads"];

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    MODEL_KEYS.iter().chain(extra).copied().collect()
}

/// Model configuration from settings; `K` and `fve` set both component policies.
fn dpca_config(s: &Settings) -> CliResult<DpcaConfig> {
    let mut cfg = DpcaConfig::default();
    if let Some(m) = s.parse::<usize>("grid")? {
        if m < 11 {
            return Err(Failure::Usage(format!("--grid must be at least 11, got {m}")));
        }
        cfg.grid_len = m;
    }
    if let Some(k) = s.parse("kernel")? {
        cfg.kernel = k;
    }
    if let Some(h) = s.parse::<Bandwidth>("h-mu")? {
        cfg.h_mean = h;
    }
    if let Some(h) = s.parse::<Bandwidth>("h-cov")? {
        cfg.h_cov = h;
    }
    if let Some(c) = s.parse("cov-selector")? {
        cfg.cov_selector = c;
    }
    if let Some(m) = s.get("mode") {
        cfg.mode = match m.to_ascii_lowercase().as_str() {
            "staged" => dpca::SmoothingMode::Staged,
            "direct" => dpca::SmoothingMode::Direct,
            _ => return Err(Failure::Usage(format!("--mode must be staged or direct, got '{m}'"))),
        };
    }
    let fve = s.parse::<f64>("fve")?;
    if let Some(f) = fve {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Failure::Usage(format!("--fve must lie in (0, 1], got {f}")));
        }
        cfg.fpc_k = KPolicy::Fve(f);
        cfg.dpc_k = KPolicy::Fve(f);
    }
    if let Some(k) = s.parse::<usize>("K")? {
        if fve.is_some() {
            return Err(Failure::Usage("--K and --fve are mutually exclusive".into()));
        }
        if k == 0 {
            return Err(Failure::Usage("--K must be at least 1".into()));
        }
        cfg.fpc_k = KPolicy::Fixed(k);
        cfg.dpc_k = KPolicy::Fixed(k);
        cfg.max_components = cfg.max_components.max(k);
    }
    Ok(cfg)
}

fn init_threads(s: &Settings) -> CliResult<usize> {
    let threads = s.parse::<usize>("threads")?.unwrap_or(1);
    // A second initialization in the same process is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(threads)
}

fn require_input(path: Option<&PathBuf>, flag: &str) -> CliResult<PathBuf> {
    let path = path.ok_or_else(|| Failure::Usage(format!("{flag} is required")))?;
    if !path.is_file() {
        return Err(Failure::Input(format!("{}: no such file", path.display())));
    }
    Ok(path.clone())
}

fn prepare_out_dir(path: Option<&PathBuf>) -> CliResult<PathBuf> {
    let path = path.ok_or_else(|| Failure::Usage("--out-dir is required".into()))?;
    fs::create_dir_all(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(path.clone())
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let s = settings_for(&a.model, &[], &keys(&[]))?;
    let cfg = dpca_config(&s)?;
    init_threads(&s)?;
    let input = require_input(a.input.as_ref(), "--input")?;
    let out = prepare_out_dir(a.out_dir.as_ref())?;
    let data = read_long_csv(&input).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    let fit = fit_dpca(&data, &cfg).map_err(compute_err)?;
    write_fit_outputs(&fit, &out).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    println!(
        "subjects {} h_mu {} h_cov {} sigma2 {} K_fpc {} K_dpc {}",
        data.n_subjects(),
        fmt_num(fit.bandwidths.mean),
        fmt_num(fit.bandwidths.cov),
        fmt_num(fit.sigma2),
        fit.k_fpc,
        fit.k_dpc
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let extra = [
        ("design", a.design.clone()),
        ("sigma", a.sigma.clone()),
        ("n", a.n.clone()),
        ("replicates", a.replicates.clone()),
        ("seed", a.seed.clone()),
    ];
    let s = settings_for(&a.model, &extra, &keys(&["design", "sigma", "n", "replicates", "seed"]))?;
    let mut fit = dpca_config(&s)?;
    let threads = init_threads(&s)?;
    let design_name = s
        .get("design")
        .ok_or_else(|| Failure::Usage("--design is required (A or B)".into()))?
        .to_ascii_uppercase();
    let n = s.parse::<usize>("n")?.unwrap_or(200);
    if n < 2 {
        return Err(Failure::Usage(format!("--n must be at least 2, got {n}")));
    }
    let (design, default_sigma) = match design_name.as_str() {
        "A" => (SimDesign::sparse(n), 0.5),
        "B" => (SimDesign::dense(n), 1.0),
        other => return Err(Failure::Usage(format!("--design must be A or B, got '{other}'"))),
    };
    let sigma = s.parse::<f64>("sigma")?.unwrap_or(default_sigma);
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Failure::Usage(format!("--sigma must be nonnegative, got {sigma}")));
    }
    let replicates = s.parse::<usize>("replicates")?.unwrap_or(50);
    if replicates == 0 {
        return Err(Failure::Usage("--replicates must be at least 1".into()));
    }
    let seed = s.parse::<u64>("seed")?.unwrap_or(0);
    let out = prepare_out_dir(a.out_dir.as_ref())?;

    let mut cfg = BenchmarkConfig::new(SimModel::standard(sigma), design, replicates, seed);
    cfg.threads = threads;
    if let KPolicy::Fixed(k) = fit.dpc_k {
        cfg.k_max = k;
    }
    if let KPolicy::Fve(f) = fit.dpc_k {
        cfg.fve_threshold = f;
    }
    fit.fpc_k = KPolicy::default();
    fit.dpc_k = KPolicy::default();
    cfg.fit = fit;
    let report = run_benchmark(&cfg).map_err(compute_err)?;
    write(&out.join("rmise.csv"), &report.to_csv())?;
    write(&out.join("rmise.json"), &report.to_json())?;
    print!("{}", report.to_csv());
    let failed = report.failed_replicates();
    if failed * 10 > replicates {
        let mut msg = format!("{failed} of {replicates} replicates failed");
        for o in report.outcomes.iter().filter(|o| o.failed()) {
            msg.push_str(&format!("\n  replicate {} (seed {}): {}", o.index, o.seed, o.failures.join("; ")));
        }
        return Err(Failure::Compute(msg));
    }
    Ok(())
}

struct ScoreSet {
    ids: Vec<String>,
    fpc: Vec<Vec<f64>>,
    dpc: Vec<Vec<f64>>,
}

fn scores_from_fit(input: &Path, cfg: &DpcaConfig) -> CliResult<ScoreSet> {
    let data = read_long_csv(input).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    let fit = fit_dpca(&data, cfg).map_err(compute_err)?;
    Ok(ScoreSet {
        ids: fit.subject_ids.clone(),
        fpc: fit.fpc_scores.rows(),
        dpc: fit.dpc_scores.rows(),
    })
}

fn scores_from_features(path: &Path) -> CliResult<ScoreSet> {
    let table = read_feature_csv(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let rows = |prefix: &str| {
        let t = table.select_prefix(prefix);
        (0..t.ids.len()).map(|i| t.values.row(i).iter().copied().collect()).collect::<Vec<Vec<f64>>>()
    };
    let set = ScoreSet {
        ids: table.ids.clone(),
        fpc: rows("fpc_"),
        dpc: rows("dpc_"),
    };
    if set.fpc.first().is_none_or(Vec::is_empty) && set.dpc.first().is_none_or(Vec::is_empty) {
        return Err(Failure::Input(format!("{}: no fpc_ or dpc_ columns", path.display())));
    }
    Ok(set)
}

/// Labels in the order of `ids`; both sides must hold exactly the same subjects.
fn align_labels(ids: &[String], labels: &[(String, u8)]) -> CliResult<Vec<u8>> {
    let map: std::collections::HashMap<&str, u8> = labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    if let Some((id, _)) = labels.iter().find(|(id, _)| !ids.contains(id)) {
        return Err(Failure::Input(format!("label for unknown subject '{id}'")));
    }
    ids.iter()
        .map(|id| {
            map.get(id.as_str())
                .copied()
                .ok_or_else(|| Failure::Input(format!("subject '{id}' has no label")))
        })
        .collect()
}

fn cmd_classify(a: ClassifyArgs) -> CliResult<()> {
    let extra = [
        ("train-size", a.train_size.clone()),
        ("repeats", a.repeats.clone()),
        ("folds", a.folds.clone()),
        ("seed", a.seed.clone()),
    ];
    let s = settings_for(&a.model, &extra, &keys(&["train-size", "repeats", "folds", "seed"]))?;
    let mut cfg = dpca_config(&s)?;
    init_threads(&s)?;
    let k_max = s.parse::<usize>("K")?.unwrap_or(8);
    if k_max == 0 {
        return Err(Failure::Usage("--K must be at least 1".into()));
    }
    cfg.fpc_k = KPolicy::default();
    cfg.dpc_k = KPolicy::default();
    cfg.max_components = k_max;
    let train_size = s.parse::<usize>("train-size")?.unwrap_or(30);
    let repeats = s.parse::<usize>("repeats")?.unwrap_or(500);
    let folds = s.parse::<usize>("folds")?.unwrap_or(5);
    let seed = s.parse::<u64>("seed")?.unwrap_or(0);
    if repeats == 0 {
        return Err(Failure::Usage("--repeats must be at least 1".into()));
    }
    if folds < 2 {
        return Err(Failure::Usage("--folds must be at least 2".into()));
    }
    let labels_path = require_input(a.labels.as_ref(), "--labels")?;
    let source = match (&a.input, &a.features) {
        (Some(p), None) => (require_input(Some(p), "--input")?, true),
        (None, Some(p)) => (require_input(Some(p), "--features")?, false),
        _ => return Err(Failure::Usage("exactly one of --input or --features is required".into())),
    };
    let out = prepare_out_dir(a.out_dir.as_ref())?;
    let labels = read_labels_csv(&labels_path).map_err(|e| Failure::Input(format!("{}: {e}", labels_path.display())))?;
    let scores = if source.1 {
        scores_from_fit(&source.0, &cfg)?
    } else {
        scores_from_features(&source.0)?
    };
    let y = align_labels(&scores.ids, &labels)?;
    let n = y.len();
    if train_size < 2 || train_size >= n {
        return Err(Failure::Usage(format!("--train-size must lie in [2, {n}), got {train_size}")));
    }
    let opts = LogisticOptions::default();
    let mut csv = String::from("method,K,mean_err,sd_err,mean_k\n");
    let mut rows = Vec::new();
    for (method, features) in [("FPC", &scores.fpc), ("DPC", &scores.dpc)] {
        let available = features.first().map_or(0, Vec::len).min(k_max);
        if available == 0 {
            continue;
        }
        let x = dpca::fpca::ScoreMatrix::from_rows(features, available).map_err(compute_err)?.values;
        let data = LabeledScores::new(x, y.clone()).map_err(compute_err)?;
        for k in 1..=available {
            let r = evaluate_split(&data, k, train_size, repeats, seed, &opts).map_err(compute_err)?;
            csv.push_str(&format!("{method},{k},{},{},\n", fmt_num(r.mean), fmt_num(r.sd)));
            rows.push(json!({"method": method, "K": k, "mean_err": r.mean, "sd_err": r.sd}));
        }
        let ks: Vec<usize> = (1..=available).collect();
        let r = evaluate_split_cv(&data, &ks, folds, train_size, repeats, seed, &opts).map_err(compute_err)?;
        csv.push_str(&format!("{method},cv,{},{},{}\n", fmt_num(r.mean), fmt_num(r.sd), fmt_num(r.mean_k)));
        rows.push(json!({"method": method, "K": "cv", "mean_err": r.mean, "sd_err": r.sd, "mean_k": r.mean_k}));
    }
    let report = json!({
        "subjects": n,
        "train_size": train_size,
        "repeats": repeats,
        "folds": folds,
        "seed": seed,
        "rows": rows,
    });
    write(&out.join("classification.csv"), &csv)?;
    write(
        &out.join("classification.json"),
        &serde_json::to_string_pretty(&report).map_err(compute_err)?,
    )?;
    print!("{csv}");
    Ok(())
}

fn curve_rows(out: &mut String, smoother: &str, criterion: &str, sel: &GcvSelection) {
    for (h, score) in &sel.scores {
        let score = score.map(fmt_num).unwrap_or_default();
        out.push_str(&format!("{smoother},{criterion},{},{score}\n", fmt_num(*h)));
    }
}

fn cmd_bandwidth(a: BandwidthArgs) -> CliResult<()> {
    let s = settings_for(&a.model, &[], &keys(&[]))?;
    let cfg = dpca_config(&s)?;
    init_threads(&s)?;
    let input = require_input(a.input.as_ref(), "--input")?;
    let data = read_long_csv(&input).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    let (lo, hi) = data.domain;
    let width = hi - lo;
    let kernel = cfg.kernel;
    let grid = Grid::new(lo, hi, cfg.grid_len).map_err(compute_err)?;
    let mut out = String::from("smoother,criterion,bandwidth,score\n");
    let pooled = pooled_observations(&data).map_err(compute_err)?;
    let mean_sel = gcv_bandwidth_1d(&pooled, 2, kernel, &candidates(&MEAN_CANDIDATES, width)).map_err(compute_err)?;
    curve_rows(&mut out, "mean", "gcv", &mean_sel);
    let h_mu = match cfg.h_mean {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => mean_sel.bandwidth,
    };
    let (mean, _) = estimate_mean_and_derivative(&data, h_mu, kernel, &grid).map_err(compute_err)?;
    let raw = raw_covariances(&data, &mean).map_err(compute_err)?;
    let cands = candidates(&COV_CANDIDATES, width);
    let gcv = gcv_bandwidth_2d(&raw, kernel, &cands).map_err(compute_err)?;
    curve_rows(&mut out, "covariance", "gcv", &gcv);
    let cv = cv_bandwidth_cov(&data, &raw, kernel, &cands, COV_FOLDS).map_err(compute_err)?;
    curve_rows(&mut out, "covariance", "cv", &cv);
    print!("{out}");
    Ok(())
}
