//! Kernel estimators of `J(t) = θ(t) x_t` and of `θ(t)`.
//!
//! The stochastic integral `(1/φ) ∫ G((τ - t)/φ) dX_τ` is read as a
//! Riemann–Stieltjes sum over grid steps with the kernel evaluated at each
//! step midpoint.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::path::{PathLabel, SamplePath, TimeGrid};

/// Minimum number of grid steps covered by the kernel support.
const MIN_STEPS_UNDER_KERNEL: f64 = 3.0;
const INTERIOR_TOLERANCE: f64 = 1e-12;
/// Default floor on `|X_t|`, relative to `|x0|`.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-4;
pub const DEFAULT_EVAL_POINTS: usize = 21;
pub const DEFAULT_WINDOW: (f64, f64) = (0.15, 0.85);

fn check_asymptotic_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("epsilon must lie in (0, 1), got {eps}")))
    }
}

fn check_hk(hk: f64) -> Result<()> {
    if hk > 0.5 && hk < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("HK must lie in (1/2, 1), got {hk}")))
    }
}

/// `φ_ε = ε^{1/(k - HK + 2)}`.
pub fn bandwidth(eps: f64, k: u32, hk: f64) -> Result<f64> {
    check_asymptotic_eps(eps)?;
    check_hk(hk)?;
    Ok(eps.powf(1.0 / (k as f64 - hk + 2.0)))
}

/// `φ_ε = ε^{1/(ρ - HK)}` for the truncated estimator.
pub fn alt_bandwidth(eps: f64, rho: f64, hk: f64) -> Result<f64> {
    check_asymptotic_eps(eps)?;
    check_hk(hk)?;
    if !(rho > hk) {
        return Err(Error::domain(format!("rho = {rho} must exceed HK = {hk}")));
    }
    Ok(eps.powf(1.0 / (rho - hk)))
}

/// Rejects `t` whose kernel window `[t + Aφ, t + Bφ]` leaves `[0, T]`, or a
/// bandwidth covering fewer than three grid steps.
pub fn check_window(path: &SamplePath, kernel: &Kernel, bandwidth: f64, t: f64) -> Result<()> {
    let horizon = path.grid.horizon();
    let (a, b) = kernel.support();
    let tol = INTERIOR_TOLERANCE * horizon;
    if t + a * bandwidth < -tol || t + b * bandwidth > horizon + tol {
        return Err(Error::domain(format!(
            "kernel window [{}, {}] at t = {t} leaves [0, {horizon}]",
            t + a * bandwidth,
            t + b * bandwidth
        )));
    }
    if bandwidth < MIN_STEPS_UNDER_KERNEL * path.grid.dt() {
        return Err(Error::domain(format!(
            "bandwidth {bandwidth} is below three grid steps of {}",
            path.grid.dt()
        )));
    }
    Ok(())
}

/// Weights `w_i` with `Σ_i w_i (v_{i+1} - v_i) = (1/φ) ∫ G(±(s - t)/φ) dv_s` for
/// the piecewise linear interpolant `v` of a grid path: `w_i` is the kernel
/// mass over step `i` divided by the step length.
pub(crate) fn step_weights(grid: TimeGrid, kernel: &Kernel, bandwidth: f64, t: f64, reflect: bool) -> Vec<(usize, f64)> {
    let dt = grid.dt();
    let n = grid.steps();
    let (a, b) = kernel.support();
    let (lo, hi) = if reflect {
        (t - b * bandwidth, t - a * bandwidth)
    } else {
        (t + a * bandwidth, t + b * bandwidth)
    };
    let first = ((lo / dt).floor().max(0.0) as usize).min(n);
    let last = ((hi / dt).ceil().max(0.0) as usize).min(n);
    let mut out = Vec::with_capacity(last.saturating_sub(first));
    for i in first..last {
        let u0 = (grid.time(i) - t) / bandwidth;
        let u1 = (grid.time(i + 1) - t) / bandwidth;
        let mass = if reflect {
            kernel.mass_between(-u1, -u0)
        } else {
            kernel.mass_between(u0, u1)
        };
        if mass != 0.0 {
            out.push((i, mass / (grid.time(i + 1) - grid.time(i))));
        }
    }
    out
}

fn kernel_increment_sum(path: &SamplePath, kernel: &Kernel, bandwidth: f64, t: f64, reflect: bool) -> f64 {
    let v = &path.values;
    step_weights(path.grid, kernel, bandwidth, t, reflect)
        .into_iter()
        .map(|(i, w)| w * (v[i + 1] - v[i]))
        .sum()
}

/// Estimate of `θ(t) X_t` at `t`.
pub fn estimate_j(path: &SamplePath, kernel: &Kernel, bandwidth: f64, t: f64) -> Result<f64> {
    check_window(path, kernel, bandwidth, t)?;
    Ok(kernel_increment_sum(path, kernel, bandwidth, t, false))
}

/// `θ̂(t) = Ĵ(t) / X_t`, or `None` when `|X_t|` is below `floor`.
///
/// `X_t` is read at the nearest grid point.
pub fn estimate_theta(
    path: &SamplePath,
    kernel: &Kernel,
    bandwidth: f64,
    t: f64,
    floor: f64,
) -> Result<(f64, Option<f64>)> {
    let j = estimate_j(path, kernel, bandwidth, t)?;
    let x = value_at(path, t);
    Ok((j, (x.abs() >= floor).then(|| j / x)))
}

fn value_at(path: &SamplePath, t: f64) -> f64 {
    let i = (t / path.grid.dt()).round().clamp(0.0, path.grid.steps() as f64) as usize;
    path.values[i]
}

/// `count` equispaced points of `[a, b]`, after shrinking the window so that
/// every point satisfies the interior condition at bandwidth `max_bandwidth`.
pub fn eval_points(
    horizon: f64,
    window: (f64, f64),
    kernel: &Kernel,
    max_bandwidth: f64,
    count: usize,
) -> Result<Vec<f64>> {
    let (ka, kb) = kernel.support();
    let lo = window.0.max(-ka * max_bandwidth);
    let hi = window.1.min(horizon - kb * max_bandwidth);
    if !(lo <= hi) || count == 0 {
        return Err(Error::domain(format!(
            "no interior evaluation points: window [{}, {}] shrinks to [{lo}, {hi}] at bandwidth {max_bandwidth}",
            window.0, window.1
        )));
    }
    if count == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

/// Estimates along a set of evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSeries {
    pub eval_points: Vec<f64>,
    pub j_hat: Vec<f64>,
    pub theta_hat: Vec<Option<f64>>,
    pub bandwidth: f64,
    pub kernel: String,
    pub window: (f64, f64),
}

impl EstimateSeries {
    pub fn compute(
        path: &SamplePath,
        kernel: &Kernel,
        bandwidth: f64,
        points: &[f64],
        floor: f64,
    ) -> Result<Self> {
        let mut j_hat = Vec::with_capacity(points.len());
        let mut theta_hat = Vec::with_capacity(points.len());
        for &t in points {
            let (j, th) = estimate_theta(path, kernel, bandwidth, t, floor)?;
            j_hat.push(j);
            theta_hat.push(th);
        }
        let window = (
            points.first().copied().unwrap_or(f64::NAN),
            points.last().copied().unwrap_or(f64::NAN),
        );
        Ok(EstimateSeries {
            eval_points: points.to_vec(),
            j_hat,
            theta_hat,
            bandwidth,
            kernel: kernel.name().to_string(),
            window,
        })
    }

    /// Rows of `t,J_hat,theta_hat,defined_flag`.
    pub fn csv_rows(&self) -> Vec<String> {
        self.eval_points
            .iter()
            .zip(&self.j_hat)
            .zip(&self.theta_hat)
            .map(|((t, j), th)| match th {
                Some(v) => format!("{t},{j},{v},1"),
                None => format!("{t},{j},NaN,0"),
            })
            .collect()
    }
}

/// Observed path turned into the truncated auxiliary process.
#[derive(Debug, Clone, PartialEq)]
pub struct AltEstimateInput {
    pub observed: SamplePath,
    pub x0: f64,
    pub bound: f64,
    pub eps: f64,
    /// `I(A_{t_i})` on the grid.
    pub indicator: Vec<bool>,
    pub auxiliary: SamplePath,
}

impl AltEstimateInput {
    /// `I(A_T)`.
    pub fn event_holds(&self) -> bool {
        *self.indicator.last().expect("nonempty grid")
    }
}

/// Builds `I(A_t)` from the running infimum of `X` against `½ x0 e^{-Lt}`
/// (sticky once it fails) and `Y_{i+1} = Y_i + I(A_{t_i}) (X_{i+1} - X_i) / X_i`.
pub fn build_auxiliary(observed: &SamplePath, x0: f64, bound: f64, eps: f64) -> Result<AltEstimateInput> {
    if !(x0 > 0.0) {
        return Err(Error::domain(format!("x0 must be positive, got {x0}")));
    }
    let grid = observed.grid;
    let v = &observed.values;
    let mut indicator = Vec::with_capacity(v.len());
    let mut running = f64::INFINITY;
    let mut alive = true;
    for (i, &x) in v.iter().enumerate() {
        running = running.min(x);
        alive = alive && running >= 0.5 * x0 * (-bound * grid.time(i)).exp();
        indicator.push(alive);
    }
    let mut y = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    y.push(acc);
    for i in 0..grid.steps() {
        if indicator[i] {
            acc += (v[i + 1] - v[i]) / v[i];
        }
        y.push(acc);
    }
    Ok(AltEstimateInput {
        observed: observed.clone(),
        x0,
        bound,
        eps,
        indicator,
        auxiliary: SamplePath {
            grid,
            values: y,
            label: PathLabel::AuxiliaryY,
        },
    })
}

/// `θ̃(t) = I(A_T) (1/φ) Σ G((t - s_i^mid)/φ) ΔY_i`; zero when the event failed.
pub fn estimate_theta_alt(input: &AltEstimateInput, kernel: &Kernel, bandwidth: f64, t: f64) -> Result<f64> {
    let y = &input.auxiliary;
    // Reflected kernel support is [-B, -A]; for symmetric kernels this is the same window.
    let (a, b) = kernel.support();
    let horizon = y.grid.horizon();
    let tol = INTERIOR_TOLERANCE * horizon;
    if t - b * bandwidth < -tol || t - a * bandwidth > horizon + tol {
        return Err(Error::domain(format!(
            "kernel window [{}, {}] at t = {t} leaves [0, {horizon}]",
            t - b * bandwidth,
            t - a * bandwidth
        )));
    }
    if bandwidth < MIN_STEPS_UNDER_KERNEL * y.grid.dt() {
        return Err(Error::domain(format!(
            "bandwidth {bandwidth} is below three grid steps of {}",
            y.grid.dt()
        )));
    }
    if !input.event_holds() {
        return Ok(0.0);
    }
    Ok(kernel_increment_sum(y, kernel, bandwidth, t, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::sde::{limit_path, simulate, Scheme};
    use crate::trend::TrendExpr;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 2048).unwrap()
    }

    fn bifbm_like(g: TimeGrid) -> SamplePath {
        let values = (0..=g.steps()).map(|i| (11.0 * g.time(i)).sin() * 0.3).collect();
        SamplePath::new(g, values, PathLabel::Bifbm).unwrap()
    }

    #[test]
    fn bandwidth_examples() {
        let phi = bandwidth(0.01, 0, 0.6).unwrap();
        assert!((phi - 0.037_275_937_203_149_4).abs() < 1e-12, "{phi}");
        assert!(bandwidth(0.999_999, 0, 0.6).unwrap() < 1.0);
        assert!(bandwidth(0.999_999, 0, 0.6).unwrap() > 0.99999);
        assert!(bandwidth(0.1, 2, 0.6).unwrap() > bandwidth(0.1, 1, 0.6).unwrap());
        assert!(bandwidth(1.0, 0, 0.6).is_err());
        assert!(bandwidth(0.1, 0, 0.4).is_err());
        let alt = alt_bandwidth(0.01, 2.0, 0.6).unwrap();
        assert!((alt - phi).abs() < 1e-15);
        assert!(alt_bandwidth(0.01, 1e6, 0.6).unwrap() > 0.9999);
        assert!(alt_bandwidth(0.01, 0.6, 0.6).is_err());
    }

    #[test]
    fn noiseless_constant_theta() {
        let g = grid();
        let th = TrendExpr::parse("0.5").unwrap();
        let x = simulate(&th, 1.0, 0.0, &bifbm_like(g), Scheme::IntegratingFactor).unwrap();
        let k = Kernel::uniform();
        let phi = 0.05;
        let t = 0.5;
        let j = estimate_j(&x, &k, phi, t).unwrap();
        let exact = 0.5 * (0.25f64).exp();
        assert!((j - exact).abs() < 1e-3, "{j} vs {exact}");
        let (_, th_hat) = estimate_theta(&x, &k, phi, t, 1e-4).unwrap();
        assert!((th_hat.unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn constant_path_gives_zero() {
        let g = grid();
        let x = SamplePath::new(g, vec![3.0; g.steps() + 1], PathLabel::ObservedX).unwrap();
        assert_eq!(estimate_j(&x, &Kernel::poly(2).unwrap(), 0.1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn constant_shift_is_invisible() {
        let g = grid();
        let w = bifbm_like(g);
        let mut shifted = w.clone();
        shifted.values.iter_mut().for_each(|v| *v += 2.5);
        let k = Kernel::poly(2).unwrap();
        let a = estimate_j(&w, &k, 0.07, 0.4).unwrap();
        let b = estimate_j(&shifted, &k, 0.07, 0.4).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kernel_scale_invariance() {
        let g = grid();
        let w = bifbm_like(g);
        let k = Kernel::poly(2).unwrap();
        let s = 2.5;
        let a = estimate_j(&w, &k, 0.1, 0.45).unwrap();
        let b = estimate_j(&w, &k.rescaled(s).unwrap(), 0.1 / s, 0.45).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn window_errors() {
        let g = grid();
        let w = bifbm_like(g);
        let k = Kernel::uniform();
        assert!(matches!(estimate_j(&w, &k, 0.2, 0.05), Err(Error::Domain(_))));
        assert!(matches!(estimate_j(&w, &k, 0.2, 0.95), Err(Error::Domain(_))));
        let tiny = 2.0 * g.dt();
        let err = estimate_j(&w, &k, tiny, 0.5).unwrap_err();
        assert!(err.to_string().contains("three grid steps"));
    }

    #[test]
    fn theta_floor_flags_undefined() {
        let g = grid();
        let x = SamplePath::new(g, vec![0.0; g.steps() + 1], PathLabel::ObservedX).unwrap();
        let (_, th) = estimate_theta(&x, &Kernel::uniform(), 0.05, 0.5, 1e-4).unwrap();
        assert!(th.is_none());
        let s = EstimateSeries::compute(&x, &Kernel::uniform(), 0.05, &[0.5], 1e-4).unwrap();
        assert_eq!(s.csv_rows(), vec!["0.5,0,NaN,0".to_string()]);
    }

    #[test]
    fn eval_points_clip_to_interior() {
        let k = Kernel::poly(0).unwrap();
        let pts = eval_points(1.0, DEFAULT_WINDOW, &k, 0.3, 21).unwrap();
        assert_eq!(pts.len(), 21);
        assert!((pts[0] - 0.3).abs() < 1e-15 && (pts[20] - 0.7).abs() < 1e-15);
        let pts = eval_points(1.0, DEFAULT_WINDOW, &Kernel::uniform(), 0.1, 21).unwrap();
        assert!((pts[0] - 0.15).abs() < 1e-15);
        assert!(eval_points(1.0, DEFAULT_WINDOW, &k, 0.6, 21).is_err());
    }

    #[test]
    fn auxiliary_noiseless_integrates_theta() {
        let g = grid();
        let th = TrendExpr::parse("0.5 + 0.3*sin(4*t)").unwrap();
        let x = limit_path(&th, 1.0, g).unwrap();
        let inp = build_auxiliary(&x, 1.0, th.sup_bound(1.0, 1000).unwrap(), 0.0).unwrap();
        assert!(inp.indicator.iter().all(|&b| b));
        let integral = 0.5 + 0.3 * (1.0 - 4f64.cos()) / 4.0;
        assert!((inp.auxiliary.terminal() - integral).abs() < 1e-3);
        let k = Kernel::uniform();
        let est = estimate_theta_alt(&inp, &k, 0.05, 0.5).unwrap();
        assert!((est - th.eval(0.5).unwrap()).abs() < 2e-3, "{est}");
    }

    #[test]
    fn indicator_switches_off_for_good() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let mut vals = vec![1.0; 11];
        vals[4] = 0.0;
        let x = SamplePath::new(g, vals, PathLabel::ObservedX).unwrap();
        let inp = build_auxiliary(&x, 1.0, 0.5, 0.1).unwrap();
        assert_eq!(&inp.indicator[..4], &[true; 4]);
        assert!(inp.indicator[4..].iter().all(|&b| !b));
        let y = &inp.auxiliary.values;
        assert!(y[4..].iter().all(|&v| v == y[4]));
        assert!(!inp.event_holds());
        let est = estimate_theta_alt(&inp, &Kernel::uniform(), 0.35, 0.5).unwrap();
        assert_eq!(est, 0.0);
        assert!(build_auxiliary(&x, -1.0, 0.5, 0.1).is_err());
    }
}
