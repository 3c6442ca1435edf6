//! Rate exponents, the bias centering constant and the limiting variance
//! `σ²_{H,K}` of the normalized kernel-weighted Wiener integral.

use serde::{Deserialize, Serialize};

use crate::bifbm::BifBmParams;
use crate::error::{Error, Result};
use crate::estimator::step_weights;
use crate::kernel::Kernel;
use crate::path::TimeGrid;
use crate::quadrature::integrate;
use crate::sde::limit_at;
use crate::trend::{derivative_num, TrendExpr};

fn check_hk(hk: f64) -> Result<()> {
    if hk > 0.5 && hk < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("HK must lie in (1/2, 1), got {hk}")))
    }
}

/// MSE decay exponent of the main estimator: `min(2, 2(k+1)/(k+2-HK))`.
pub fn rate_exponent(k: u32, hk: f64) -> Result<f64> {
    check_hk(hk)?;
    let k = k as f64;
    Ok((2.0 * (k + 1.0) / (k + 2.0 - hk)).min(2.0))
}

/// MSE decay exponent of the truncated estimator: `min(4, 2ρ/(ρ-HK))`.
pub fn alt_rate_exponent(rho: f64, hk: f64) -> Result<f64> {
    check_hk(hk)?;
    if !(rho > hk) {
        return Err(Error::domain(format!("rho = {rho} must exceed HK = {hk}")));
    }
    Ok((2.0 * rho / (rho - hk)).min(4.0))
}

/// `(k+1)/(k-HK+2)`, the exponent normalizing the limit law; lies in `(0, 1)`.
pub fn centering_exponent(k: u32, hk: f64) -> Result<f64> {
    check_hk(hk)?;
    let k = k as f64;
    Ok((k + 1.0) / (k - hk + 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSpec {
    pub k: Option<u32>,
    pub rho: Option<f64>,
    pub hk: f64,
    pub exponent: f64,
    pub centering: Option<f64>,
}

impl RateSpec {
    pub fn main(k: u32, hk: f64) -> Result<Self> {
        Ok(RateSpec {
            k: Some(k),
            rho: None,
            hk,
            exponent: rate_exponent(k, hk)?,
            centering: Some(centering_exponent(k, hk)?),
        })
    }

    pub fn alternate(rho: f64, hk: f64) -> Result<Self> {
        Ok(RateSpec {
            k: None,
            rho: Some(rho),
            hk,
            exponent: alt_rate_exponent(rho, hk)?,
            centering: None,
        })
    }
}

/// Which form of the covariance density enters the `σ²` double integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma2Convention {
    /// `β ∬ G(u)G(v)|u-v|^{2HK-2}`: the small-bandwidth limit of the
    /// normalized variance at any interior `t > 0`.
    #[default]
    Stationary,
    /// Adds `α ∬ G(u)G(v)(|u|^{2H}+|v|^{2H})^{K-2}(|u||v|)^{2H-1}`, i.e. the
    /// density evaluated literally at kernel-scale arguments.
    WithAlphaAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sigma2 {
    pub value: f64,
    pub error: f64,
}

/// `σ²_{H,K}` by adaptive quadrature.
///
/// The stationary part is rewritten through the kernel autocorrelation
/// `C(w) = ∫ G(v+w) G(v) dv` as `2β ∫_0^{B-A} w^{2HK-2} C(w) dw`, and the
/// substitution `w = s^{1/(2HK-1)}` absorbs the diagonal singularity.
pub fn sigma2(params: &BifBmParams, kernel: &Kernel, tol: f64, convention: Sigma2Convention) -> Result<Sigma2> {
    if !(tol >= 1e-10) {
        return Err(Error::domain(format!("sigma2 tolerance must be at least 1e-10, got {tol}")));
    }
    let (a, b) = kernel.support();
    let width = b - a;
    let power = 1.0 / (2.0 * params.hk() - 1.0);
    let inner_tol = tol * 1e-3 / width;
    let mut inner_err: Option<Error> = None;
    let mut autocorrelation = |w: f64| -> f64 {
        match integrate(|v| kernel.eval(v + w) * kernel.eval(v), a, b - w, inner_tol, 0.0) {
            Ok(r) => r.value,
            Err(e) => {
                inner_err.get_or_insert(e);
                f64::NAN
            }
        }
    };
    // Scale the outer tolerance so the reported error is in units of σ².
    let outer_scale = 2.0 * params.beta() * power;
    let outer = integrate(
        |s| autocorrelation(s.powf(power)),
        0.0,
        width.powf(1.0 / power),
        tol / outer_scale,
        0.0,
    );
    if let Some(e) = inner_err {
        return Err(e);
    }
    let outer = outer?;
    let mut value = outer_scale * outer.value;
    let mut error = outer_scale * outer.error;

    if convention == Sigma2Convention::WithAlphaAbs && params.alpha() != 0.0 {
        let (v, e) = alpha_part_abs(params, kernel, tol)?;
        value += v;
        error += e;
    }
    if !(value > 0.0) {
        return Err(Error::numerical(format!("sigma2 is not positive: {value}")));
    }
    Ok(Sigma2 { value, error })
}

fn alpha_part_abs(params: &BifBmParams, kernel: &Kernel, tol: f64) -> Result<(f64, f64)> {
    let (a, b) = kernel.support();
    let pieces = [(a, 0.0), (0.0, b)];
    let scale = params.alpha().abs();
    let mut total = 0.0;
    let mut error = 0.0;
    for &(u0, u1) in &pieces {
        let mut inner_err: Option<Error> = None;
        let mut inner_sum = 0.0;
        let outer = integrate(
            |u| {
                if u == 0.0 {
                    return 0.0;
                }
                let gu = kernel.eval(u);
                if gu == 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for &(v0, v1) in &pieces {
                    match integrate(
                        |v| kernel.eval(v) * params.alpha_part(u.abs(), v.abs().max(f64::MIN_POSITIVE)),
                        v0,
                        v1,
                        tol * 1e-3 / scale,
                        0.0,
                    ) {
                        Ok(r) => {
                            acc += r.value;
                            inner_sum += r.error;
                        }
                        Err(e) => {
                            inner_err.get_or_insert(e);
                        }
                    }
                }
                gu * acc
            },
            u0,
            u1,
            tol / 4.0,
            0.0,
        );
        if let Some(e) = inner_err {
            return Err(e);
        }
        let outer = outer?;
        total += outer.value;
        error += outer.error;
        let _ = inner_sum;
    }
    Ok((total, error))
}

/// Exact variance of `φ^{-HK} ∫ G((s - t)/φ) dW_s` for the piecewise linear
/// interpolant of `W` on a grid, computed from the increment covariances.
/// Its small-bandwidth limit is `σ²`.
pub fn normalized_integral_variance(
    params: &BifBmParams,
    kernel: &Kernel,
    bandwidth: f64,
    t: f64,
    grid: TimeGrid,
) -> Result<f64> {
    let steps = step_weights(grid, kernel, bandwidth, t, false);
    let r = |s: f64, u: f64| params.covariance_unchecked(s, u);
    let mut var = 0.0;
    for &(i, wi) in &steps {
        for &(j, wj) in &steps {
            let (ti, ti1, tj, tj1) = (grid.time(i), grid.time(i + 1), grid.time(j), grid.time(j + 1));
            let c = r(ti1, tj1) - r(ti1, tj) - r(ti, tj1) + r(ti, tj);
            var += wi * wj * c;
        }
    }
    Ok(var * bandwidth.powf(2.0 - 2.0 * params.hk()))
}

fn derivative_step(order: u32) -> f64 {
    match order {
        1 => 1e-3,
        2 => 1e-2,
        3 => 2e-2,
        _ => 4e-2,
    }
}

/// `J^{(k+1)}(t)/(k+1)! · ∫ G(u) u^{k+1} du` with `J(s) = θ(s) x_s`.
///
/// Zero without differentiation when the kernel moment vanishes.
pub fn bias_constant(
    theta: &TrendExpr,
    x0: f64,
    t: f64,
    k: u32,
    kernel: &Kernel,
    horizon: f64,
) -> Result<f64> {
    let order = k + 1;
    if order > 4 {
        return Err(Error::domain(format!("bias constant needs k + 1 <= 4, got k = {k}")));
    }
    let moment = kernel.moment(order);
    if moment == 0.0 {
        return Ok(0.0);
    }
    let err = std::cell::RefCell::new(None);
    let j = |s: f64| -> f64 {
        match theta.eval(s).and_then(|th| Ok(th * limit_at(theta, x0, s)?)) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let d = derivative_num(j, t, order, derivative_step(order), (0.0, horizon))?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let factorial: f64 = (1..=order).map(f64::from).product();
    Ok(d / factorial * moment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents() {
        assert!((rate_exponent(0, 0.6).unwrap() - 10.0 / 7.0).abs() < 1e-14);
        assert!(rate_exponent(50, 0.6).unwrap() < 2.0);
        assert!(rate_exponent(5000, 0.6).unwrap() > 1.999);
        assert!((alt_rate_exponent(2.0, 0.6).unwrap() - 20.0 / 7.0).abs() < 1e-14);
        assert_eq!(alt_rate_exponent(1.0, 0.9).unwrap(), 4.0);
        assert!(alt_rate_exponent(0.5, 0.6).is_err());
        let a = centering_exponent(0, 0.63).unwrap();
        assert!(a > 0.0 && a < 1.0);
        let mut last = 0.0;
        for k in 0..10 {
            let e = rate_exponent(k, 0.7).unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn sigma2_fbm_uniform_is_one() {
        for &h in &[0.55, 0.7, 0.9] {
            let p = BifBmParams::new(h, 1.0).unwrap();
            let s = sigma2(&p, &Kernel::uniform(), 1e-9, Sigma2Convention::Stationary).unwrap();
            assert!((s.value - 1.0).abs() < 1e-7, "H={h}: {s:?}");
        }
    }

    #[test]
    fn sigma2_uniform_closed_form_for_bifbm() {
        // For G = 1 on a unit interval, β ∬|u-v|^{2HK-2} = 2^{1-K}.
        let p = BifBmParams::new(0.75, 0.8).unwrap();
        let s = sigma2(&p, &Kernel::uniform(), 1e-9, Sigma2Convention::Stationary).unwrap();
        assert!((s.value - 2f64.powf(0.2)).abs() < 1e-7);
    }

    #[test]
    fn sigma2_tolerance_halving() {
        let p = BifBmParams::new(0.9, 0.7).unwrap();
        let g = Kernel::poly(2).unwrap();
        let coarse = sigma2(&p, &g, 1e-6, Sigma2Convention::Stationary).unwrap();
        let fine = sigma2(&p, &g, 5e-7, Sigma2Convention::Stationary).unwrap();
        assert!((coarse.value - fine.value).abs() < 1e-6);
        assert!(sigma2(&p, &g, 1e-12, Sigma2Convention::Stationary).is_err());
    }

    #[test]
    fn alpha_convention_is_smaller_for_k_below_one() {
        let p = BifBmParams::new(0.9, 0.7).unwrap();
        let g = Kernel::uniform();
        let st = sigma2(&p, &g, 1e-8, Sigma2Convention::Stationary).unwrap();
        let ab = sigma2(&p, &g, 1e-6, Sigma2Convention::WithAlphaAbs).unwrap();
        assert!(ab.value < st.value);
        assert!(ab.value > 0.0);
        let f = BifBmParams::new(0.8, 1.0).unwrap();
        let a = sigma2(&f, &g, 1e-8, Sigma2Convention::Stationary).unwrap();
        let b = sigma2(&f, &g, 1e-8, Sigma2Convention::WithAlphaAbs).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn finite_bandwidth_variance_approaches_sigma2() {
        let p = BifBmParams::new(0.7, 1.0).unwrap();
        let g = Kernel::uniform();
        // Window edges on grid points: the sum is exactly an fBm increment.
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let v = normalized_integral_variance(&p, &g, 0.02, 0.5, grid).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn bias_constant_cases() {
        let th = TrendExpr::parse("0.5").unwrap();
        let even = bias_constant(&th, 1.0, 0.5, 0, &Kernel::uniform(), 1.0).unwrap();
        assert_eq!(even, 0.0);
        let zero = bias_constant(&TrendExpr::parse("0").unwrap(), 1.0, 0.5, 1, &Kernel::uniform(), 1.0).unwrap();
        assert_eq!(zero, 0.0);
        let c: f64 = 0.5;
        let t: f64 = 0.5;
        let got = bias_constant(&th, 1.0, t, 1, &Kernel::uniform(), 1.0).unwrap();
        let want = c.powi(3) * (c * t).exp() / 12.0 / 2.0;
        assert!((got - want).abs() < 1e-7, "{got} vs {want}");
        assert!(bias_constant(&th, 1.0, 0.5, 4, &Kernel::poly(4).unwrap(), 1.0).is_err());
    }
}
