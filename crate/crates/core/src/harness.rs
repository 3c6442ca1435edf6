//! Replicated Monte Carlo experiments: MSE rate sweeps for both estimators,
//! the normality diagnostic for the main estimator, and the pathwise/MSE
//! envelope check for the observed process.
//!
//! Replication `r` at sweep position `e` draws its noise from ChaCha stream
//! `(e << 32) | r` of the configured seed (stream `r` when coupled), and all
//! aggregation happens sequentially over replications in index order, so
//! results do not depend on the thread count or scheduling.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    alt_rate_exponent, bias_constant, centering_exponent, normalized_integral_variance, rate_exponent, sigma2,
    Sigma2Convention,
};
use crate::bifbm::BifBmParams;
use crate::error::{Error, Result};
use crate::estimator::{
    alt_bandwidth, bandwidth, build_auxiliary, estimate_j, estimate_theta, estimate_theta_alt, eval_points,
    DEFAULT_EVAL_POINTS, DEFAULT_RELATIVE_FLOOR, DEFAULT_WINDOW,
};
use crate::io::{write_csv, write_json, Provenance};
use crate::kernel::{Kernel, KernelId};
use crate::path::{SamplePath, TimeGrid};
use crate::sampler::{CovFactor, DEFAULT_MAX_STEPS};
use crate::sde::{lemma31_check, lemma31_mse_bound, limit_at, limit_path, Propagator, Scheme};
use crate::stats::{anderson_darling_normal, ks_normal, mean_var, AdReport, KsReport};
use crate::trend::TrendExpr;

/// Smallest replication count accepted for a slope fit.
pub const MIN_REPLICATIONS_FOR_RATES: usize = 100;
/// Dense sampling used when checking θ on `[0, T]` at load time.
const THETA_CHECK_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub theta: TrendExpr,
    pub x0: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorVariant {
    #[default]
    Main,
    Alternate,
}

fn default_kernel() -> KernelId {
    KernelId::Uniform
}

fn default_eval_points() -> usize {
    DEFAULT_EVAL_POINTS
}

fn default_sigma2_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Noise levels, strictly decreasing in `(0, 1)`.
    pub eps: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelId,
    /// Smoothness declaration `k` for the main estimator.
    #[serde(default)]
    pub k: u32,
    /// Hölder index `ρ` for the alternate estimator.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub estimator: EstimatorVariant,
    /// Evaluation window `[a, b]`; defaults to `[0.15 T, 0.85 T]`.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    /// Common random numbers across the noise levels.
    #[serde(default)]
    pub coupled: bool,
    #[serde(default)]
    pub scheme: Scheme,
    /// Lipschitz bound `L`; defaults to `1.05 sup|θ|`.
    #[serde(default)]
    pub bound: Option<f64>,
    /// Evaluation time of the normality experiment; defaults to `T/2`.
    #[serde(default)]
    pub t_star: Option<f64>,
    /// Overrides the exponent in `ε^{-a}` of the normality statistic.
    #[serde(default)]
    pub normalization_exponent: Option<f64>,
    #[serde(default = "default_sigma2_tol")]
    pub sigma2_tol: f64,
    #[serde(default)]
    pub sigma2_convention: Sigma2Convention,
    /// Not part of the echoed or hashed configuration.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub experiment: ExperimentSection,
}

/// JSON-pointer form of a `serde_path_to_error` path such as `experiment.eps[1]`.
fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(key),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

impl ExperimentConfig {
    /// Parses JSON text; errors carry a JSON pointer (or line/column for
    /// malformed JSON). Defaults are filled and the result is validated.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            Error::config(format!("line {} column {}", e.line(), e.column()), format!("malformed JSON: {e}"))
        })?;
        Self::from_value(value)
    }

    /// As [`ExperimentConfig::from_json`] for an already parsed JSON tree.
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let raw: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let pointer = pointer_of(e.path());
            Error::config(if pointer.is_empty() { "/".into() } else { pointer }, e.into_inner().to_string())
        })?;
        raw.resolve()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<BifBmParams> {
        BifBmParams::new(self.model.h, self.model.k)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.model.horizon, self.grid.n)
    }

    pub fn kernel(&self) -> Result<Kernel> {
        self.experiment.kernel.build()
    }

    pub fn window(&self) -> (f64, f64) {
        self.experiment.window.unwrap_or((
            DEFAULT_WINDOW.0 * self.model.horizon,
            DEFAULT_WINDOW.1 * self.model.horizon,
        ))
    }

    pub fn lipschitz_bound(&self) -> Result<f64> {
        match self.experiment.bound {
            Some(l) => Ok(l),
            None => self.model.theta.sup_bound(self.model.horizon, THETA_CHECK_SAMPLES),
        }
    }

    /// Bandwidth for noise level `eps` under the configured estimator.
    pub fn bandwidth_for(&self, eps: f64) -> Result<f64> {
        let hk = self.model.h * self.model.k;
        match self.experiment.estimator {
            EstimatorVariant::Main => bandwidth(eps, self.experiment.k, hk),
            EstimatorVariant::Alternate => alt_bandwidth(eps, self.rho()?, hk),
        }
    }

    fn rho(&self) -> Result<f64> {
        self.experiment
            .rho
            .ok_or_else(|| Error::config("/experiment/rho", "the alternate estimator needs rho"))
    }

    /// MSE exponent predicted for the configured estimator.
    pub fn theoretical_exponent(&self) -> Result<f64> {
        let hk = self.model.h * self.model.k;
        match self.experiment.estimator {
            EstimatorVariant::Main => rate_exponent(self.experiment.k, hk),
            EstimatorVariant::Alternate => alt_rate_exponent(self.rho()?, hk),
        }
    }

    /// Evaluation points shared by every noise level, clipped to the interior
    /// at the largest bandwidth.
    pub fn eval_points(&self) -> Result<Vec<f64>> {
        let max_bw = self
            .experiment
            .eps
            .iter()
            .map(|&e| self.bandwidth_for(e))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        eval_points(
            self.model.horizon,
            self.window(),
            &self.kernel()?,
            max_bw,
            self.experiment.eval_points,
        )
        .map_err(|e| Error::config("/experiment/window", e.to_string()))
    }

    /// Fills defaults (`window`, `bound`, `t_star`) and validates everything that
    /// can be checked before sampling.
    pub fn resolve(mut self) -> Result<Self> {
        let cfg_err = |ptr: &str, e: Error| Error::config(ptr, e.to_string());
        let m = &self.model;
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return Err(Error::config("/model/T", format!("T must be positive, got {}", m.horizon)));
        }
        if !m.x0.is_finite() || m.x0 == 0.0 {
            return Err(Error::config("/model/x0", format!("x0 must be finite and nonzero, got {}", m.x0)));
        }
        let params = BifBmParams::new(m.h, m.k).map_err(|e| {
            let msg = e.to_string();
            let ptr = if msg.contains("HK must") {
                "/model"
            } else if msg.contains("H must") {
                "/model/H"
            } else {
                "/model/K"
            };
            Error::config(ptr, msg)
        })?;
        m.theta
            .validate_on(m.horizon, THETA_CHECK_SAMPLES)
            .map_err(|e| cfg_err("/model/theta", e))?;
        if self.grid.n < 2 || self.grid.n > DEFAULT_MAX_STEPS {
            return Err(Error::config(
                "/grid/n",
                format!("n must lie in [2, {DEFAULT_MAX_STEPS}], got {}", self.grid.n),
            ));
        }
        let ex = &self.experiment;
        if ex.eps.is_empty() {
            return Err(Error::config("/experiment/eps", "at least one noise level is required"));
        }
        for (i, &e) in ex.eps.iter().enumerate() {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::config(format!("/experiment/eps/{i}"), format!("{e} is not in (0, 1)")));
            }
            if i > 0 && !(e < ex.eps[i - 1]) {
                return Err(Error::config(
                    format!("/experiment/eps/{i}"),
                    "noise levels must be strictly decreasing",
                ));
            }
        }
        if ex.replications == 0 {
            return Err(Error::config("/experiment/replications", "must be at least 1"));
        }
        if ex.eval_points == 0 {
            return Err(Error::config("/experiment/eval_points", "must be at least 1"));
        }
        let kernel = ex.kernel.build().map_err(|e| cfg_err("/experiment/kernel", e))?;
        match ex.estimator {
            EstimatorVariant::Main => {
                if kernel.order() < ex.k {
                    return Err(Error::config(
                        "/experiment/k",
                        format!("kernel {} has order {} < k = {}", kernel.name(), kernel.order(), ex.k),
                    ));
                }
            }
            EstimatorVariant::Alternate => {
                let rho = self.rho()?;
                if !(rho > params.hk()) {
                    return Err(Error::config(
                        "/experiment/rho",
                        format!("rho = {rho} must exceed HK = {}", params.hk()),
                    ));
                }
                if !(m.x0 > 0.0) {
                    return Err(Error::config("/model/x0", "the alternate estimator needs x0 > 0"));
                }
            }
        }
        if !(ex.sigma2_tol >= 1e-10) {
            return Err(Error::config("/experiment/sigma2_tol", "tolerance must be at least 1e-10"));
        }
        if let Some(l) = ex.bound {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config("/experiment/bound", format!("bound must be nonnegative, got {l}")));
            }
        }
        let window = self.window();
        if !(window.0 >= 0.0 && window.0 <= window.1 && window.1 <= m.horizon) {
            return Err(Error::config(
                "/experiment/window",
                format!("[{}, {}] is not a subinterval of [0, {}]", window.0, window.1, m.horizon),
            ));
        }
        let dt = m.horizon / self.grid.n as f64;
        let smallest = *ex.eps.last().unwrap_or(&0.5);
        let min_bw = self.bandwidth_for(smallest).map_err(|e| cfg_err("/experiment/eps", e))?;
        if min_bw < 3.0 * dt {
            return Err(Error::config(
                "/experiment/eps",
                format!("bandwidth {min_bw} at eps = {smallest} spans fewer than three grid steps; raise n"),
            ));
        }
        self.eval_points()?;
        let bound = self.lipschitz_bound().map_err(|e| cfg_err("/model/theta", e))?;
        let t_star = self.experiment.t_star.unwrap_or(0.5 * m.horizon);
        self.experiment.window = Some(window);
        self.experiment.bound = Some(bound);
        self.experiment.t_star = Some(t_star);
        Ok(self)
    }

    pub fn provenance(&self) -> Result<Provenance> {
        Provenance::of(self, self.experiment.seed)
    }
}

/// What a result describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RateSweep,
    Normality,
    Lemma31,
}

/// Statistics at one noise level of a rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub bandwidth: f64,
    /// Mean squared error at each evaluation point.
    pub mse: Vec<f64>,
    pub sup_mse: f64,
    /// Evaluation point attaining `sup_mse`.
    pub sup_t: f64,
    /// Monte Carlo standard error of `sup_mse` at `sup_t`.
    pub mc_se: f64,
    /// Replications with `|X_t|` below the floor somewhere (main estimator).
    pub undefined_theta: usize,
    /// Replications on which the lower-envelope event failed (alternate estimator).
    pub event_failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub theoretical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityRow {
    pub eps: f64,
    pub bandwidth: f64,
    pub t_star: f64,
    pub normalization_exponent: f64,
    pub bias_constant: f64,
    pub sigma2: f64,
    pub sigma2_error: f64,
    /// Exact variance of the normalized noise integral at this bandwidth and grid.
    pub finite_bandwidth_variance: f64,
    pub mean: f64,
    pub variance: f64,
    pub variance_ratio: f64,
    pub anderson_darling: AdReport,
    pub kolmogorov_smirnov: KsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub eps: f64,
    pub bound: f64,
    /// `e^{2LT} ε² T^{2HK}`.
    pub mse_bound: f64,
    /// `max_t` of the Monte Carlo mean of `(X_t - x_t)²` over the grid.
    pub sup_mse: f64,
    pub sup_mse_se: f64,
    pub slack: f64,
    /// Paths violating the running-supremum envelope beyond the slack.
    pub running_sup_violations: usize,
    /// Paths violating the envelope with `|W_t|` in place of its running supremum.
    pub pointwise_violations: usize,
    pub max_running_sup_excess: f64,
    pub max_pointwise_excess: f64,
}

/// Everything an experiment reports. Runtime information lives in
/// [`RuntimeInfo`] so that result files are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub replications: usize,
    pub eval_points: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<EpsRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<SlopeFit>,
    /// Whether `sup_mse` decreases strictly along the sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_mse_decreasing: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub normality: Vec<NormalityRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lemma: Vec<LemmaRow>,
    /// `Z / σ` per noise level of a normality run.
    #[serde(skip)]
    pub standardized: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeInfo {
    pub elapsed_seconds: f64,
    pub threads: usize,
}

/// Least squares slope of `log y` on `log x` and its standard error.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::domain("slope fit needs equally long inputs"));
    }
    if xs.len() < 3 {
        return Err(Error::domain(format!("slope fit needs at least 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::domain("slope fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::domain("slope fit abscissae have zero variance"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

fn stream_id(coupled: bool, eps_index: usize, replication: usize) -> u64 {
    if coupled {
        replication as u64
    } else {
        ((eps_index as u64) << 32) | replication as u64
    }
}

/// Runs `f` for every replication in parallel and returns the outputs in
/// replication order, or the failure with the smallest replication index.
fn replicate<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let outcomes: Vec<Result<T>> = (0..count).into_par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(count);
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::Replication {
                    replication: r,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

struct Setup {
    params: BifBmParams,
    grid: TimeGrid,
    kernel: Kernel,
    factor: CovFactor,
    propagator: Propagator,
    provenance: Provenance,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let params = cfg.params()?;
    let grid = cfg.time_grid()?;
    let kernel = cfg.kernel()?;
    let factor = CovFactor::build(&params, grid)?;
    let propagator = Propagator::new(&cfg.model.theta, grid, cfg.experiment.scheme)?;
    let provenance = cfg.provenance()?;
    Ok(Setup {
        params,
        grid,
        kernel,
        factor,
        propagator,
        provenance,
    })
}

impl Setup {
    fn observe(&self, cfg: &ExperimentConfig, eps: f64, stream: u64) -> Result<(SamplePath, SamplePath)> {
        let w = self.factor.sample_stream(cfg.experiment.seed, stream);
        let x = self.propagator.propagate(cfg.model.x0, eps, &w)?;
        Ok((w, x))
    }
}

fn empty_result(cfg: &ExperimentConfig, kind: ExperimentKind, prov: &Provenance) -> ExperimentResult {
    ExperimentResult {
        kind,
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        config: cfg.clone(),
        replications: cfg.experiment.replications,
        eval_points: Vec::new(),
        rates: Vec::new(),
        slope: None,
        sup_mse_decreasing: None,
        normality: Vec::new(),
        lemma: Vec::new(),
        standardized: Vec::new(),
    }
}

/// MSE of `θ̂_t X_t - θ(t) x_t` (main) or `θ̃(t) - θ(t)` (alternate) across the
/// noise levels, with a log-log slope fit of the sup-MSE.
pub fn run_rate_sweep(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<ExperimentResult> {
    let ex = &cfg.experiment;
    if ex.eps.len() < 3 {
        return Err(Error::config(
            "/experiment/eps",
            format!("a slope fit needs at least 3 noise levels, got {}", ex.eps.len()),
        ));
    }
    if ex.replications < MIN_REPLICATIONS_FOR_RATES {
        return Err(Error::config(
            "/experiment/replications",
            format!("rate fits need at least {MIN_REPLICATIONS_FOR_RATES} replications"),
        ));
    }
    let s = setup(cfg)?;
    let points = cfg.eval_points()?;
    let theta = &cfg.model.theta;
    let bound = cfg.lipschitz_bound()?;
    let targets: Vec<f64> = match ex.estimator {
        EstimatorVariant::Main => points
            .iter()
            .map(|&t| Ok(theta.eval(t)? * limit_at(theta, cfg.model.x0, t)?))
            .collect::<Result<_>>()?,
        EstimatorVariant::Alternate => points.iter().map(|&t| theta.eval(t)).collect::<Result<_>>()?,
    };

    let mut result = empty_result(cfg, ExperimentKind::RateSweep, &s.provenance);
    result.eval_points = points.clone();
    for (e_idx, &eps) in ex.eps.iter().enumerate() {
        let bw = cfg.bandwidth_for(eps)?;
        // Per replication: squared errors at each point and a flag.
        let reps = replicate(ex.replications, |r| {
            let (_, x) = s.observe(cfg, eps, stream_id(ex.coupled, e_idx, r))?;
            let mut sq = Vec::with_capacity(points.len());
            let mut flag = false;
            match ex.estimator {
                EstimatorVariant::Main => {
                    let floor = DEFAULT_RELATIVE_FLOOR * cfg.model.x0.abs();
                    for (&t, &target) in points.iter().zip(&targets) {
                        let (j, th) = estimate_theta(&x, &s.kernel, bw, t, floor)?;
                        flag |= th.is_none();
                        sq.push((j - target).powi(2));
                    }
                }
                EstimatorVariant::Alternate => {
                    let aux = build_auxiliary(&x, cfg.model.x0, bound, eps)?;
                    flag = !aux.event_holds();
                    for (&t, &target) in points.iter().zip(&targets) {
                        let est = estimate_theta_alt(&aux, &s.kernel, bw, t)?;
                        sq.push((est - target).powi(2));
                    }
                }
            }
            Ok((sq, flag))
        })?;
        let r = reps.len() as f64;
        let mut mse = vec![0.0; points.len()];
        let mut flagged = 0;
        for (sq, flag) in &reps {
            for (m, v) in mse.iter_mut().zip(sq) {
                *m += v;
            }
            flagged += usize::from(*flag);
        }
        mse.iter_mut().for_each(|m| *m /= r);
        let (arg, sup_mse) = mse
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let at_sup: Vec<f64> = reps.iter().map(|(sq, _)| sq[arg]).collect();
        let (_, var) = mean_var(&at_sup);
        let mc_se = (var / r).sqrt();
        log(&format!(
            "eps={eps} bandwidth={bw:.6} sup_mse={sup_mse:.6e} (t={:.4}) mc_se={mc_se:.3e}",
            points[arg]
        ));
        let (undefined_theta, event_failures) = match ex.estimator {
            EstimatorVariant::Main => (flagged, 0),
            EstimatorVariant::Alternate => (0, flagged),
        };
        result.rates.push(EpsRow {
            eps,
            bandwidth: bw,
            mse,
            sup_mse,
            sup_t: points[arg],
            mc_se,
            undefined_theta,
            event_failures,
        });
    }
    let eps: Vec<f64> = result.rates.iter().map(|row| row.eps).collect();
    let sup: Vec<f64> = result.rates.iter().map(|row| row.sup_mse).collect();
    let (slope, stderr) = fit_loglog_slope(&eps, &sup)?;
    result.slope = Some(SlopeFit {
        slope,
        stderr,
        theoretical: cfg.theoretical_exponent()?,
    });
    result.sup_mse_decreasing = Some(sup.windows(2).all(|w| w[1] < w[0]));
    let _ = s.params;
    Ok(result)
}

/// Replicated draws of `Z = ε^{-a}(Ĵ(t*) - J(t*) - φ^{k+1} b)` at each noise
/// level, compared with `N(0, σ²)`. `a` is the theoretical centering exponent
/// unless overridden, and `b` the bias constant.
pub fn run_normality(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<ExperimentResult> {
    let ex = &cfg.experiment;
    if ex.estimator != EstimatorVariant::Main {
        return Err(Error::config("/experiment/estimator", "the normality experiment uses the main estimator"));
    }
    let s = setup(cfg)?;
    let t_star = ex.t_star.unwrap_or(0.5 * cfg.model.horizon);
    let theta = &cfg.model.theta;
    let x0 = cfg.model.x0;
    let hk = s.params.hk();
    let target = theta.eval(t_star)? * limit_at(theta, x0, t_star)?;
    let bias = bias_constant(theta, x0, t_star, ex.k, &s.kernel, cfg.model.horizon)?;
    let sig = sigma2(&s.params, &s.kernel, ex.sigma2_tol, ex.sigma2_convention)?;
    let exponent = match ex.normalization_exponent {
        Some(a) => a,
        None => centering_exponent(ex.k, hk)?,
    };
    let sd = sig.value.sqrt();

    let mut result = empty_result(cfg, ExperimentKind::Normality, &s.provenance);
    result.eval_points = vec![t_star];
    for (e_idx, &eps) in ex.eps.iter().enumerate() {
        let bw = cfg.bandwidth_for(eps)?;
        // Validate the window once up front so the error is not reported per replication.
        let probe = SamplePath::new(s.grid, vec![0.0; s.grid.steps() + 1], crate::path::PathLabel::ObservedX)?;
        estimate_j(&probe, &s.kernel, bw, t_star).map_err(|e| Error::config("/experiment/t_star", e.to_string()))?;
        let scale = eps.powf(-exponent);
        let centering = bw.powi(ex.k as i32 + 1) * bias;
        let z = replicate(ex.replications, |r| {
            let (_, x) = s.observe(cfg, eps, stream_id(ex.coupled, e_idx, r))?;
            let j = estimate_j(&x, &s.kernel, bw, t_star)?;
            Ok(scale * (j - target - centering))
        })?;
        let (mean, variance) = mean_var(&z);
        let ad = anderson_darling_normal(&z, sd)?;
        let ks = ks_normal(&z, sd)?;
        let finite = normalized_integral_variance(&s.params, &s.kernel, bw, t_star, s.grid)?;
        log(&format!(
            "eps={eps} bandwidth={bw:.6} var_ratio={:.4} AD={:.4} (p={:.4}) KS p={:.4}",
            variance / sig.value,
            ad.statistic,
            ad.p_value,
            ks.p_value
        ));
        result.normality.push(NormalityRow {
            eps,
            bandwidth: bw,
            t_star,
            normalization_exponent: exponent,
            bias_constant: bias,
            sigma2: sig.value,
            sigma2_error: sig.error,
            finite_bandwidth_variance: finite,
            mean,
            variance,
            variance_ratio: variance / sig.value,
            anderson_darling: ad,
            kolmogorov_smirnov: ks,
        });
        result.standardized.push(z.iter().map(|v| v / sd).collect());
    }
    Ok(result)
}

/// Pathwise envelope and MSE bound for `X - x` over the replications.
pub fn run_lemma31(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<ExperimentResult> {
    let ex = &cfg.experiment;
    let s = setup(cfg)?;
    let bound = cfg.lipschitz_bound()?;
    let limit = limit_path(&cfg.model.theta, cfg.model.x0, s.grid)?;
    let mut result = empty_result(cfg, ExperimentKind::Lemma31, &s.provenance);
    for (e_idx, &eps) in ex.eps.iter().enumerate() {
        let reps = replicate(ex.replications, |r| {
            let (w, x) = s.observe(cfg, eps, stream_id(ex.coupled, e_idx, r))?;
            let report = lemma31_check(&x, &limit, &w, eps, bound)?;
            let sq: Vec<f64> = x.values.iter().zip(&limit.values).map(|(a, b)| (a - b).powi(2)).collect();
            Ok((report, sq))
        })?;
        let n = reps.len() as f64;
        let mut mean = vec![0.0; s.grid.steps() + 1];
        for (_, sq) in &reps {
            for (m, v) in mean.iter_mut().zip(sq) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let (arg, sup_mse) = mean
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let (_, var) = mean_var(&reps.iter().map(|(_, sq)| sq[arg]).collect::<Vec<_>>());
        let row = LemmaRow {
            eps,
            bound,
            mse_bound: lemma31_mse_bound(bound, cfg.model.horizon, eps, s.params.hk()),
            sup_mse,
            sup_mse_se: (var / n).sqrt(),
            slack: reps.first().map_or(0.0, |(rep, _)| rep.slack),
            running_sup_violations: reps.iter().filter(|(rep, _)| rep.running_sup_violations > 0).count(),
            pointwise_violations: reps.iter().filter(|(rep, _)| rep.pointwise_violations > 0).count(),
            max_running_sup_excess: reps.iter().map(|(rep, _)| rep.running_sup_excess).fold(f64::NEG_INFINITY, f64::max),
            max_pointwise_excess: reps.iter().map(|(rep, _)| rep.pointwise_excess).fold(f64::NEG_INFINITY, f64::max),
        };
        log(&format!(
            "eps={eps} sup_mse={:.6e} bound={:.6e} violations={} (pointwise envelope: {})",
            row.sup_mse, row.mse_bound, row.running_sup_violations, row.pointwise_violations
        ));
        result.lemma.push(row);
    }
    Ok(result)
}

impl ExperimentResult {
    /// Names of the files [`ExperimentResult::write`] produces for `cfg`.
    pub fn planned_files(kind: ExperimentKind, cfg: &ExperimentConfig) -> Vec<String> {
        let mut files = vec!["summary.json".to_string()];
        let count = cfg.experiment.eps.len();
        match kind {
            ExperimentKind::RateSweep => {
                files.push("rates.csv".into());
                files.extend((0..count).map(|i| format!("mse_eps{i}.csv")));
            }
            ExperimentKind::Normality => {
                files.push("normality.csv".into());
                files.extend((0..count).map(|i| format!("z_eps{i}.csv")));
            }
            ExperimentKind::Lemma31 => files.push("lemma31.csv".into()),
        }
        files
    }

    /// Writes the summary JSON and CSV tables into `dir`; returns the file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let prov = Provenance {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
        };
        write_json(&dir.join("summary.json"), self)?;
        match self.kind {
            ExperimentKind::RateSweep => {
                write_csv(
                    &dir.join("rates.csv"),
                    &prov,
                    "eps,bandwidth,sup_mse,mc_se",
                    self.rates
                        .iter()
                        .map(|r| format!("{},{},{},{}", r.eps, r.bandwidth, r.sup_mse, r.mc_se)),
                )?;
                for (i, row) in self.rates.iter().enumerate() {
                    write_csv(
                        &dir.join(format!("mse_eps{i}.csv")),
                        &prov,
                        "t,mse",
                        self.eval_points.iter().zip(&row.mse).map(|(t, m)| format!("{t},{m}")),
                    )?;
                }
            }
            ExperimentKind::Normality => {
                write_csv(
                    &dir.join("normality.csv"),
                    &prov,
                    "eps,bandwidth,variance_ratio,ad_statistic,ad_p_value,ks_statistic,ks_p_value",
                    self.normality.iter().map(|r| {
                        format!(
                            "{},{},{},{},{},{},{}",
                            r.eps,
                            r.bandwidth,
                            r.variance_ratio,
                            r.anderson_darling.statistic,
                            r.anderson_darling.p_value,
                            r.kolmogorov_smirnov.statistic,
                            r.kolmogorov_smirnov.p_value
                        )
                    }),
                )?;
                for (i, z) in self.standardized.iter().enumerate() {
                    write_csv(&dir.join(format!("z_eps{i}.csv")), &prov, "z", z.iter().map(|v| v.to_string()))?;
                }
            }
            ExperimentKind::Lemma31 => {
                write_csv(
                    &dir.join("lemma31.csv"),
                    &prov,
                    "eps,bound,mse_bound,sup_mse,sup_mse_se,running_sup_violations,pointwise_violations",
                    self.lemma.iter().map(|r| {
                        format!(
                            "{},{},{},{},{},{},{}",
                            r.eps,
                            r.bound,
                            r.mse_bound,
                            r.sup_mse,
                            r.sup_mse_se,
                            r.running_sup_violations,
                            r.pointwise_violations
                        )
                    }),
                )?;
            }
        }
        Ok(Self::planned_files(self.kind, &self.config))
    }

    /// One line summarizing the experiment.
    pub fn headline(&self) -> String {
        match self.kind {
            ExperimentKind::RateSweep => match self.slope {
                Some(s) => format!(
                    "slope {:.4} ± {:.4} (theoretical exponent {:.4})",
                    s.slope, s.stderr, s.theoretical
                ),
                None => "no slope".into(),
            },
            ExperimentKind::Normality => self
                .normality
                .iter()
                .map(|r| {
                    format!(
                        "eps={}: Var(Z)/sigma2 = {:.4}, AD p = {:.4}, KS p = {:.4}",
                        r.eps, r.variance_ratio, r.anderson_darling.p_value, r.kolmogorov_smirnov.p_value
                    )
                })
                .collect::<Vec<_>>()
                .join("; "),
            ExperimentKind::Lemma31 => self
                .lemma
                .iter()
                .map(|r| {
                    format!(
                        "eps={}: sup MSE {:.4e} <= bound {:.4e}, {} envelope violations",
                        r.eps, r.sup_mse, r.mse_bound, r.running_sup_violations
                    )
                })
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "model": {"theta": "0.5", "x0": 1.0, "H": 0.9, "K": 0.7, "T": 1.0},
            "grid": {"n": 256},
            "experiment": {"eps": [0.2, 0.1, 0.05], "replications": 100, "seed": 3}
        })
    }

    fn cfg(v: &serde_json::Value) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&v.to_string())
    }

    fn pointer(e: Error) -> String {
        match e {
            Error::Config { pointer, .. } => pointer,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn slope_fit_examples() {
        let xs = [0.2, 0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (s, se) = fit_loglog_slope(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && se < 1e-12);
        let (s, _) = fit_loglog_slope(&xs, &[3.0; 4]).unwrap();
        assert!(s.abs() < 1e-12);
        assert!(fit_loglog_slope(&xs[..2], &ys[..2]).is_err());
        assert!(fit_loglog_slope(&[1.0; 3], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_loglog_slope(&xs, &[1.0, -1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn slope_fit_noisy_power_law() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..8).map(|i| 0.3 * 0.6f64.powi(i)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x.powf(1.46) * (1.0 + 0.05 * z)
            })
            .collect();
        let (s, se) = fit_loglog_slope(&xs, &ys).unwrap();
        assert!((s - 1.46).abs() < 0.1 && se > 0.0);
    }

    #[test]
    fn config_defaults_are_resolved() {
        let c = cfg(&base_json()).unwrap();
        assert_eq!(c.experiment.window, Some((0.15, 0.85)));
        assert!((c.experiment.bound.unwrap() - 0.525).abs() < 1e-12);
        assert_eq!(c.experiment.t_star, Some(0.5));
        assert_eq!(c.experiment.kernel, KernelId::Uniform);
        assert!((c.theoretical_exponent().unwrap() - 2.0 / 1.37).abs() < 1e-12);
        let pts = c.eval_points().unwrap();
        assert_eq!(pts.len(), 21);
        let half = 0.5 * c.bandwidth_for(0.2).unwrap();
        assert!(pts[0] >= half && pts[20] <= 1.0 - half);
    }

    #[test]
    fn config_errors_carry_pointers() {
        let mut v = base_json();
        v["experiment"]["eps"] = serde_json::json!([0.1, 0.2, 0.05]);
        assert_eq!(pointer(cfg(&v).unwrap_err()), "/experiment/eps/1");
        let mut v = base_json();
        v["model"]["H"] = serde_json::json!(0.5);
        v["model"]["K"] = serde_json::json!(0.9);
        assert_eq!(pointer(cfg(&v).unwrap_err()), "/model");
        let mut v = base_json();
        v["model"]["theta"] = serde_json::json!("1/(t-0.5)");
        assert_eq!(pointer(cfg(&v).unwrap_err()), "/model/theta");
        let mut v = base_json();
        v["experiment"]["kernel"] = serde_json::json!("triangle");
        assert_eq!(pointer(cfg(&v).unwrap_err()), "/experiment/kernel");
        let mut v = base_json();
        v["grid"]["n"] = serde_json::json!("many");
        assert_eq!(pointer(cfg(&v).unwrap_err()), "/grid/n");
        let mut v = base_json();
        v["experiment"]["estimator"] = serde_json::json!("alternate");
        assert_eq!(pointer(cfg(&v).unwrap_err()), "/experiment/rho");
        let mut v = base_json();
        v["grid"]["n"] = serde_json::json!(16);
        assert_eq!(pointer(cfg(&v).unwrap_err()), "/experiment/eps");
        let e = ExperimentConfig::from_json("{\"model\": ").unwrap_err();
        assert!(pointer(e).starts_with("line 1"));
    }

    #[test]
    fn sweep_preconditions() {
        let mut v = base_json();
        v["experiment"]["eps"] = serde_json::json!([0.1]);
        let c = cfg(&v).unwrap();
        assert_eq!(pointer(run_rate_sweep(&c, |_| {}).unwrap_err()), "/experiment/eps");
        let mut v = base_json();
        v["experiment"]["replications"] = serde_json::json!(10);
        let c = cfg(&v).unwrap();
        assert_eq!(pointer(run_rate_sweep(&c, |_| {}).unwrap_err()), "/experiment/replications");
    }

    #[test]
    fn small_sweep_is_deterministic_and_decreasing() {
        let c = cfg(&base_json()).unwrap();
        let a = run_rate_sweep(&c, |_| {}).unwrap();
        let b = run_rate_sweep(&c, |_| {}).unwrap();
        assert_eq!(a, b);
        assert!(a.rates.iter().all(|r| r.mse.iter().all(|&m| m >= 0.0)));
        assert_eq!(a.sup_mse_decreasing, Some(true));
        assert!(a.slope.unwrap().stderr > 0.0);
    }

    #[test]
    fn replication_failures_are_indexed() {
        let err = replicate(10, |r| if r >= 4 { Err(Error::numerical("boom")) } else { Ok(r) }).unwrap_err();
        match err {
            Error::Replication { replication, .. } => assert_eq!(replication, 4),
            other => panic!("{other}"),
        }
        assert_eq!(err_code(Error::Replication { replication: 1, source: Box::new(Error::numerical("x")) }), 3);
    }

    fn err_code(e: Error) -> i32 {
        e.exit_code()
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = cfg(&base_json()).unwrap();
        let h = a.provenance().unwrap();
        a.experiment.output_dir = Some(PathBuf::from("/elsewhere"));
        assert_eq!(h, a.provenance().unwrap());
    }
}
