//! Trajectories of `dX = θ(t) X dt + ε dW^{H,K}` and of its noiseless limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{PathLabel, SamplePath, TimeGrid};
use crate::quadrature::{gauss_legendre3, integrate, simpson};
use crate::trend::TrendExpr;

const EXP_GUARD: f64 = 700.0;
/// Absolute allowance for the difference between the simulation and limit quadratures.
const SCHEME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact propagation of the linear drift across each step.
    #[default]
    IntegratingFactor,
    Euler,
}

fn guarded_exp(integral: f64, at: f64) -> Result<f64> {
    if integral.abs() > EXP_GUARD {
        return Err(Error::numerical(format!(
            "|∫θ| = {integral} exceeds {EXP_GUARD} at t = {at}"
        )));
    }
    Ok(integral.exp())
}

/// `x_t = x0 exp(∫_0^t θ)` on the grid, with the integral accumulated by
/// composite Simpson on four subintervals per step.
pub fn limit_path(theta: &TrendExpr, x0: f64, grid: TimeGrid) -> Result<SamplePath> {
    if !x0.is_finite() {
        return Err(Error::domain(format!("x0 must be finite, got {x0}")));
    }
    let mut values = Vec::with_capacity(grid.steps() + 1);
    values.push(x0);
    let mut acc = 0.0;
    for i in 0..grid.steps() {
        let (a, b) = (grid.time(i), grid.time(i + 1));
        let mut err = None;
        let piece = simpson(
            |s| {
                theta.eval(s).unwrap_or_else(|e| {
                    err.get_or_insert(e);
                    f64::NAN
                })
            },
            a,
            b,
            4,
        );
        if let Some(e) = err {
            return Err(e);
        }
        acc += piece;
        values.push(x0 * guarded_exp(acc, b)?);
    }
    Ok(SamplePath {
        grid,
        values,
        label: PathLabel::LimitX,
    })
}

/// `x_t` at an arbitrary `t` (negative `t` integrates backwards), by adaptive quadrature.
pub fn limit_at(theta: &TrendExpr, x0: f64, t: f64) -> Result<f64> {
    let mut err = None;
    let integral = integrate(
        |s| {
            theta.eval(s).unwrap_or_else(|e| {
                err.get_or_insert(e);
                0.0
            })
        },
        0.0,
        t,
        1e-14,
        1e-14,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(x0 * guarded_exp(integral.value, t)?)
}

/// Per-step drift multipliers for a fixed `θ` and grid, reusable across replications.
#[derive(Debug, Clone)]
pub struct Propagator {
    grid: TimeGrid,
    scheme: Scheme,
    factors: Vec<f64>,
}

impl Propagator {
    pub fn new(theta: &TrendExpr, grid: TimeGrid, scheme: Scheme) -> Result<Self> {
        let dt = grid.dt();
        let mut factors = Vec::with_capacity(grid.steps());
        for i in 0..grid.steps() {
            let (a, b) = (grid.time(i), grid.time(i + 1));
            let f = match scheme {
                Scheme::IntegratingFactor => {
                    let mut err = None;
                    let integral = gauss_legendre3(
                        |s| {
                            theta.eval(s).unwrap_or_else(|e| {
                                err.get_or_insert(e);
                                f64::NAN
                            })
                        },
                        a,
                        b,
                    );
                    if let Some(e) = err {
                        return Err(e);
                    }
                    guarded_exp(integral, b)?
                }
                Scheme::Euler => 1.0 + theta.eval(a)? * dt,
            };
            factors.push(f);
        }
        Ok(Propagator {
            grid,
            scheme,
            factors,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `X_{i+1} = F_i X_i + ε (w_{i+1} - w_i)`.
    pub fn propagate(&self, x0: f64, eps: f64, noise: &SamplePath) -> Result<SamplePath> {
        if noise.label != PathLabel::Bifbm {
            return Err(Error::domain("noise path must be a bifBm path"));
        }
        if noise.grid != self.grid {
            return Err(Error::domain("noise path grid differs from the propagator grid"));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::domain(format!("epsilon must be nonnegative, got {eps}")));
        }
        let mut values = Vec::with_capacity(noise.len());
        let mut x = x0;
        values.push(x);
        for (i, (f, dw)) in self.factors.iter().zip(noise.increments()).enumerate() {
            x = f * x + eps * dw;
            if !x.is_finite() {
                return Err(Error::numerical(format!(
                    "trajectory became non-finite at step {}",
                    i + 1
                )));
            }
            values.push(x);
        }
        Ok(SamplePath {
            grid: self.grid,
            values,
            label: PathLabel::ObservedX,
        })
    }
}

/// One observed trajectory driven by the noise path `w`.
pub fn simulate(
    theta: &TrendExpr,
    x0: f64,
    eps: f64,
    w: &SamplePath,
    scheme: Scheme,
) -> Result<SamplePath> {
    Propagator::new(theta, w.grid, scheme)?.propagate(x0, eps, w)
}

/// Pathwise comparison of `|X_t - x_t|` with the Gronwall envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathwiseLemmaReport {
    /// `max_t |X_t - x_t| - e^{Lt} ε sup_{s≤t}|W_s|` (grid supremum).
    pub running_sup_excess: f64,
    /// `max_t |X_t - x_t| - e^{Lt} ε |W_t|`, the envelope without the running supremum.
    pub pointwise_excess: f64,
    pub slack: f64,
    pub running_sup_violations: usize,
    pub pointwise_violations: usize,
}

/// Checks `|X_t - x_t| <= e^{Lt} ε sup_{s≤t} |W_s|` on the grid.
///
/// Violations are counted beyond a slack of `1e-3 ε` plus the scheme tolerance.
/// The pointwise `|W_t|` envelope is reported alongside; it fails whenever
/// `W` revisits zero while `X - x` does not.
pub fn lemma31_check(
    observed: &SamplePath,
    limit: &SamplePath,
    noise: &SamplePath,
    eps: f64,
    bound: f64,
) -> Result<PathwiseLemmaReport> {
    observed.same_grid(limit)?;
    observed.same_grid(noise)?;
    let scale = limit.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let slack = 1e-3 * eps + SCHEME_TOLERANCE * scale;
    let mut report = PathwiseLemmaReport {
        running_sup_excess: f64::NEG_INFINITY,
        pointwise_excess: f64::NEG_INFINITY,
        slack,
        running_sup_violations: 0,
        pointwise_violations: 0,
    };
    let mut running: f64 = 0.0;
    for i in 0..observed.len() {
        let t = observed.grid.time(i);
        let gap = (observed.values[i] - limit.values[i]).abs();
        let w = noise.values[i].abs();
        running = running.max(w);
        let growth = (bound * t).exp() * eps;
        let a = gap - growth * running;
        let b = gap - growth * w;
        report.running_sup_excess = report.running_sup_excess.max(a);
        report.pointwise_excess = report.pointwise_excess.max(b);
        report.running_sup_violations += usize::from(a > slack);
        report.pointwise_violations += usize::from(b > slack);
    }
    Ok(report)
}

/// `e^{2LT} ε² T^{2HK}`, the bound on `sup_t E(X_t - x_t)²`.
pub fn lemma31_mse_bound(bound: f64, horizon: f64, eps: f64, hk: f64) -> f64 {
    (2.0 * bound * horizon).exp() * eps * eps * horizon.powf(2.0 * hk)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    fn theta(s: &str) -> TrendExpr {
        TrendExpr::parse(s).unwrap()
    }

    fn noise(g: TimeGrid) -> SamplePath {
        let values = (0..=g.steps())
            .map(|i| {
                let t = g.time(i);
                (7.0 * t).sin() * t + 0.3 * t
            })
            .collect();
        SamplePath::new(g, values, PathLabel::Bifbm).unwrap()
    }

    #[test]
    fn limit_path_closed_forms() {
        let g = grid(64);
        let zero = limit_path(&theta("0"), 2.5, g).unwrap();
        assert!(zero.values.iter().all(|&v| v == 2.5));
        let c = limit_path(&theta("0.7"), 1.5, g).unwrap();
        for (i, v) in c.values.iter().enumerate() {
            let exact = 1.5 * (0.7 * g.time(i)).exp();
            assert!(((v - exact) / exact).abs() < 1e-10);
        }
        let nil = limit_path(&theta("sin(t)"), 0.0, g).unwrap();
        assert!(nil.values.iter().all(|&v| v == 0.0));
        let smooth = limit_path(&theta("sin(2*t)+0.1*t"), 1.0, g).unwrap();
        let exact = ((1.0 - 2f64.cos()) / 2.0 + 0.05f64).exp();
        assert!((smooth.terminal() / exact - 1.0).abs() < 1e-8);
        assert!(limit_path(&theta("800"), 1.0, g).is_err());
    }

    #[test]
    fn limit_at_matches_closed_form() {
        let v = limit_at(&theta("0.5"), 1.0, 0.8).unwrap();
        assert!((v - 0.4f64.exp()).abs() < 1e-14);
        let v = limit_at(&theta("0.5"), 1.0, -0.4).unwrap();
        assert!((v - (-0.2f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn noiseless_simulation_matches_limit() {
        let g = grid(512);
        let th = theta("sin(2*t)+0.1*t");
        let w = noise(g);
        let x = simulate(&th, 1.0, 0.0, &w, Scheme::IntegratingFactor).unwrap();
        let lim = limit_path(&th, 1.0, g).unwrap();
        for (a, b) in x.values.iter().zip(&lim.values) {
            assert!(((a - b) / b).abs() < 1e-6);
        }
    }

    #[test]
    fn pure_noise_when_theta_zero() {
        let g = grid(32);
        let w = noise(g);
        let x = simulate(&theta("0"), 2.0, 0.3, &w, Scheme::IntegratingFactor).unwrap();
        for (xv, wv) in x.values.iter().zip(&w.values) {
            assert!((xv - (2.0 + 0.3 * wv)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_in_noise_amplitude() {
        let g = grid(128);
        let th = theta("0.5 + cos(3*t)");
        let w = noise(g);
        let run = |eps| simulate(&th, 1.0, eps, &w, Scheme::IntegratingFactor).unwrap();
        let (base, one, two) = (run(0.0), run(0.1), run(0.2));
        for i in 0..base.len() {
            let d1 = one.values[i] - base.values[i];
            let d2 = two.values[i] - base.values[i];
            assert!((d2 - 2.0 * d1).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_wrong_inputs() {
        let g = grid(8);
        let w = noise(g);
        let mut x = w.clone();
        x.label = PathLabel::ObservedX;
        assert!(simulate(&theta("1"), 1.0, 0.1, &x, Scheme::Euler).is_err());
        assert!(simulate(&theta("1"), 1.0, -0.1, &w, Scheme::Euler).is_err());
        let err = simulate(&theta("400"), 1e300, 0.1, &w, Scheme::Euler).unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
    }

    #[test]
    fn lemma_envelope_on_deterministic_noise() {
        let g = grid(256);
        let th = theta("0.5");
        let w = noise(g);
        let x = simulate(&th, 1.0, 0.1, &w, Scheme::IntegratingFactor).unwrap();
        let lim = limit_path(&th, 1.0, g).unwrap();
        let r = lemma31_check(&x, &lim, &w, 0.1, 0.525).unwrap();
        assert_eq!(r.running_sup_violations, 0);
        // The noise path crosses zero near t = π/7 · k, where the pointwise envelope collapses.
        assert!(r.pointwise_violations > 0);

        let x0 = simulate(&th, 1.0, 0.0, &w, Scheme::IntegratingFactor).unwrap();
        let r0 = lemma31_check(&x0, &lim, &w, 0.0, 0.525).unwrap();
        assert_eq!(r0.running_sup_violations, 0);
        assert!(r0.running_sup_excess.abs() < 1e-9);

        let other = limit_path(&th, 1.0, grid(128)).unwrap();
        assert!(lemma31_check(&x, &other, &w, 0.1, 0.525).is_err());
    }
}
