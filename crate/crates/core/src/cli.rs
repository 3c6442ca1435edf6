//! The `bifbm` command line front end.
//!
//! Every subcommand writes `manifest.json` into its output directory before
//! doing any work, then its result files, then `runtime.json`. The one-line
//! headline goes to standard output; progress lines go to standard error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::asymptotics::{sigma2, Sigma2Convention};
use crate::bifbm::BifBmParams;
use crate::error::{Error, Result};
use crate::estimator::{build_auxiliary, estimate_theta_alt, EstimateSeries, DEFAULT_RELATIVE_FLOOR};
use crate::harness::{
    run_lemma31, run_normality, run_rate_sweep, EstimatorVariant, ExperimentConfig, ExperimentKind,
    ExperimentResult, RuntimeInfo,
};
use crate::io::{write_csv, write_json, write_path, write_paths};
use crate::kernel::KernelId;
use crate::path::TimeGrid;
use crate::sampler::CovFactor;
use crate::sde::{limit_path, Propagator};

#[derive(Debug, Parser)]
#[command(name = "bifbm", version, about = "Simulation and kernel estimation for SDEs driven by bifractional Brownian motion")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample bifBm paths to CSV files.
    Sample(SampleArgs),
    /// Simulate one observed trajectory per noise level together with the limit path.
    Simulate(RunArgs),
    /// Estimate θ(t) on one simulated trajectory per noise level.
    Estimate(RunArgs),
    /// Limiting variance of the normalized kernel-weighted noise integral.
    Sigma2(Sigma2Args),
    /// MSE rate sweep over the noise levels with a log-log slope fit.
    Sweep(RunArgs),
    /// Normality diagnostic of the rescaled estimation error.
    Normality(RunArgs),
    /// Envelope and MSE bound for the deviation from the limit path.
    Lemma31(RunArgs),
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long = "H")]
    h: f64,
    #[arg(long = "K")]
    k: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config with `model`, `grid` and `experiment` sections.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Grid steps.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Lipschitz bound L used by the alternate estimator and the envelope check.
    #[arg(long)]
    bound: Option<f64>,
    #[arg(long = "t-star")]
    t_star: Option<f64>,
    /// Common random numbers across noise levels.
    #[arg(long)]
    coupled: bool,
}

#[derive(Debug, Args)]
struct Sigma2Args {
    /// Take H, K, kernel, tolerance and convention from a config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "H")]
    h: Option<f64>,
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    kernel: Option<KernelId>,
    #[arg(long)]
    tol: Option<f64>,
    /// `stationary` or `with_alpha_abs`.
    #[arg(long, value_parser = parse_convention)]
    convention: Option<Sigma2Convention>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_convention(s: &str) -> std::result::Result<Sigma2Convention, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_path: Option<&'a Path>,
    config: Value,
    tool_version: &'a str,
    timestamp_unix: u64,
    output_dir: &'a Path,
    files: Vec<String>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config_path: Option<&Path>,
    config: Value,
    files: Vec<String>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let manifest = RunManifest {
        command,
        config_path,
        config,
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp_unix,
        output_dir: dir,
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn write_runtime(dir: &Path, started: Instant) -> Result<()> {
    let info = RuntimeInfo {
        elapsed_seconds: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    write_json(&dir.join("runtime.json"), &info)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Reads the config, applies flag overrides on the JSON tree, then resolves it.
fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| {
        Error::config(format!("line {} column {}", e.line(), e.column()), format!("malformed JSON: {e}"))
    })?;
    if let Some(exp) = value.get_mut("experiment").and_then(Value::as_object_mut) {
        if let Some(seed) = args.seed {
            exp.insert("seed".into(), seed.into());
        }
        if let Some(r) = args.replications {
            exp.insert("replications".into(), r.into());
        }
        if let Some(eps) = &args.eps {
            exp.insert("eps".into(), eps.clone().into());
        }
        if let Some(b) = args.bound {
            exp.insert("bound".into(), b.into());
        }
        if let Some(t) = args.t_star {
            exp.insert("t_star".into(), t.into());
        }
        if args.coupled {
            exp.insert("coupled".into(), true.into());
        }
    }
    if let Some(n) = args.n {
        if let Some(grid) = value.get_mut("grid").and_then(Value::as_object_mut) {
            grid.insert("n".into(), n.into());
        }
    }
    let mut cfg = ExperimentConfig::from_value(value)?;
    if let Some(out) = &args.out {
        cfg.experiment.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.experiment.output_dir.clone().ok_or_else(|| {
        Error::config("/experiment/output_dir", "no output directory: pass --out or set experiment.output_dir")
    })
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn cmd_sample(a: &SampleArgs) -> Result<String> {
    let params = BifBmParams::new(a.h, a.k)?;
    let grid = TimeGrid::new(a.horizon, a.n)?;
    if a.count == 0 {
        return Err(Error::domain("--count must be at least 1"));
    }
    let files: Vec<String> = (0..a.count).map(|i| format!("path_{i:05}.csv")).collect();
    let config = serde_json::json!({"H": a.h, "K": a.k, "T": a.horizon, "n": a.n, "count": a.count, "seed": a.seed});
    write_manifest(&a.out, "sample", None, config, files)?;
    let started = Instant::now();
    let factor = CovFactor::build(&params, grid)?;
    let paths = factor.sample_paths(a.count, a.seed)?;
    write_paths(&a.out, "path", &paths)?;
    write_runtime(&a.out, started)?;
    let mean_sq = paths.iter().map(|p| p.terminal().powi(2)).sum::<f64>() / paths.len() as f64;
    Ok(format!(
        "wrote {} paths; mean W_T^2 = {mean_sq:.6} (exact T^(2HK) = {:.6})",
        paths.len(),
        a.horizon.powf(2.0 * params.hk())
    ))
}

fn cmd_simulate(args: &RunArgs) -> Result<String> {
    let cfg = load_config(args)?;
    let dir = output_dir(&cfg)?;
    let count = cfg.experiment.eps.len();
    let mut files = vec!["noise.csv".to_string(), "limit.csv".to_string()];
    files.extend((0..count).map(|i| format!("x_eps{i}.csv")));
    write_manifest(&dir, "simulate", Some(&args.config), to_value(&cfg)?, files)?;
    let started = Instant::now();
    let grid = cfg.time_grid()?;
    let factor = CovFactor::build(&cfg.params()?, grid)?;
    let w = factor.sample_stream(cfg.experiment.seed, 0);
    let limit = limit_path(&cfg.model.theta, cfg.model.x0, grid)?;
    let prop = Propagator::new(&cfg.model.theta, grid, cfg.experiment.scheme)?;
    write_path(&dir.join("noise.csv"), &w)?;
    write_path(&dir.join("limit.csv"), &limit)?;
    let mut parts = Vec::new();
    for (i, &eps) in cfg.experiment.eps.iter().enumerate() {
        let x = prop.propagate(cfg.model.x0, eps, &w)?;
        write_path(&dir.join(format!("x_eps{i}.csv")), &x)?;
        let gap = x.values.iter().zip(&limit.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        progress(&format!("eps={eps} sup|X - x| = {gap:.6e}"));
        parts.push(format!("eps={eps}: sup|X-x| = {gap:.4e}"));
    }
    write_runtime(&dir, started)?;
    Ok(parts.join("; "))
}

fn cmd_estimate(args: &RunArgs) -> Result<String> {
    let cfg = load_config(args)?;
    let dir = output_dir(&cfg)?;
    let count = cfg.experiment.eps.len();
    let files = (0..count).map(|i| format!("estimate_eps{i}.csv")).collect();
    write_manifest(&dir, "estimate", Some(&args.config), to_value(&cfg)?, files)?;
    let started = Instant::now();
    let prov = cfg.provenance()?;
    let grid = cfg.time_grid()?;
    let kernel = cfg.kernel()?;
    let factor = CovFactor::build(&cfg.params()?, grid)?;
    let prop = Propagator::new(&cfg.model.theta, grid, cfg.experiment.scheme)?;
    let points = cfg.eval_points()?;
    let w = factor.sample_stream(cfg.experiment.seed, 0);
    let truth: Vec<f64> = points.iter().map(|&t| cfg.model.theta.eval(t)).collect::<Result<_>>()?;
    let mut parts = Vec::new();
    for (i, &eps) in cfg.experiment.eps.iter().enumerate() {
        let x = prop.propagate(cfg.model.x0, eps, &w)?;
        let bw = cfg.bandwidth_for(eps)?;
        let file = dir.join(format!("estimate_eps{i}.csv"));
        let max_err = match cfg.experiment.estimator {
            EstimatorVariant::Main => {
                let floor = DEFAULT_RELATIVE_FLOOR * cfg.model.x0.abs();
                let series = EstimateSeries::compute(&x, &kernel, bw, &points, floor)?;
                write_csv(&file, &prov, "t,J_hat,theta_hat,defined", series.csv_rows())?;
                series
                    .theta_hat
                    .iter()
                    .zip(&truth)
                    .filter_map(|(e, t)| e.map(|v| (v - t).abs()))
                    .fold(0.0, f64::max)
            }
            EstimatorVariant::Alternate => {
                let aux = build_auxiliary(&x, cfg.model.x0, cfg.lipschitz_bound()?, eps)?;
                let est: Vec<f64> = points
                    .iter()
                    .map(|&t| estimate_theta_alt(&aux, &kernel, bw, t))
                    .collect::<Result<_>>()?;
                let event = u8::from(aux.event_holds());
                write_csv(
                    &file,
                    &prov,
                    "t,theta_tilde,event",
                    points.iter().zip(&est).map(|(t, v)| format!("{t},{v},{event}")),
                )?;
                est.iter().zip(&truth).map(|(e, t)| (e - t).abs()).fold(0.0, f64::max)
            }
        };
        progress(&format!("eps={eps} bandwidth={bw:.6} max|theta_hat - theta| = {max_err:.4e}"));
        parts.push(format!("eps={eps}: max|theta_hat-theta| = {max_err:.4e}"));
    }
    write_runtime(&dir, started)?;
    Ok(parts.join("; "))
}

fn cmd_sigma2(a: &Sigma2Args) -> Result<String> {
    let (mut h, mut k, mut kernel, mut tol, mut convention) = (None, None, KernelId::Uniform, 1e-8, Sigma2Convention::Stationary);
    if let Some(path) = &a.config {
        let cfg = ExperimentConfig::from_file(path)?;
        h = Some(cfg.model.h);
        k = Some(cfg.model.k);
        kernel = cfg.experiment.kernel;
        tol = cfg.experiment.sigma2_tol;
        convention = cfg.experiment.sigma2_convention;
    }
    let h = a.h.or(h).ok_or_else(|| Error::config("/model/H", "--H or --config is required"))?;
    let k = a.k.or(k).ok_or_else(|| Error::config("/model/K", "--K or --config is required"))?;
    let kernel = a.kernel.unwrap_or(kernel);
    let tol = a.tol.unwrap_or(tol);
    let convention = a.convention.unwrap_or(convention);
    let params = BifBmParams::new(h, k)?;
    let config = serde_json::json!({"H": h, "K": k, "kernel": kernel, "tol": tol, "convention": convention});
    if let Some(out) = &a.out {
        write_manifest(out, "sigma2", a.config.as_deref(), config.clone(), vec!["sigma2.json".into()])?;
    }
    let s = sigma2(&params, &kernel.build()?, tol, convention)?;
    if let Some(out) = &a.out {
        write_json(&out.join("sigma2.json"), &serde_json::json!({"input": config, "sigma2": s}))?;
    }
    Ok(format!("sigma2 = {:.6} ± {:.1e}", s.value, s.error.max(tol)))
}

fn cmd_experiment(args: &RunArgs, kind: ExperimentKind) -> Result<String> {
    let cfg = load_config(args)?;
    let dir = output_dir(&cfg)?;
    let name = match kind {
        ExperimentKind::RateSweep => "sweep",
        ExperimentKind::Normality => "normality",
        ExperimentKind::Lemma31 => "lemma31",
    };
    let mut files = ExperimentResult::planned_files(kind, &cfg);
    files.push("runtime.json".into());
    write_manifest(&dir, name, Some(&args.config), to_value(&cfg)?, files)?;
    let started = Instant::now();
    let result = match kind {
        ExperimentKind::RateSweep => run_rate_sweep(&cfg, progress)?,
        ExperimentKind::Normality => run_normality(&cfg, progress)?,
        ExperimentKind::Lemma31 => run_lemma31(&cfg, progress)?,
    };
    result.write(&dir)?;
    write_runtime(&dir, started)?;
    Ok(result.headline())
}

fn dispatch(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sigma2(a) => cmd_sigma2(a),
        Command::Sweep(a) => cmd_experiment(a, ExperimentKind::RateSweep),
        Command::Normality(a) => cmd_experiment(a, ExperimentKind::Normality),
        Command::Lemma31(a) => cmd_experiment(a, ExperimentKind::Lemma31),
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::config("--threads", e.to_string())),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(headline) => {
            println!("{headline}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
