//! Covariance structure of bifractional Brownian motion.
//!
//! `R(s,t) = 2^{-K} [ (t^{2H} + s^{2H})^K - |t-s|^{2HK} ]` with `0 < H < 1`,
//! `0 < K <= 1`, restricted here to `HK ∈ (1/2, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated `(H, K)` pair with the constants of the mixed partial density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct BifBmParams {
    h: f64,
    k: f64,
    hk: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "H")]
    h: f64,
    #[serde(rename = "K")]
    k: f64,
}

impl TryFrom<RawParams> for BifBmParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        BifBmParams::new(raw.h, raw.k)
    }
}

impl From<BifBmParams> for RawParams {
    fn from(p: BifBmParams) -> Self {
        RawParams { h: p.h, k: p.k }
    }
}

impl BifBmParams {
    pub fn new(h: f64, k: f64) -> Result<Self> {
        if !h.is_finite() || h <= 0.0 || h >= 1.0 {
            return Err(Error::domain(format!("H must lie in (0, 1), got {h}")));
        }
        if !k.is_finite() || k <= 0.0 || k > 1.0 {
            return Err(Error::domain(format!("K must lie in (0, 1], got {k}")));
        }
        let hk = h * k;
        if hk <= 0.5 || hk >= 1.0 {
            return Err(Error::domain(format!(
                "HK must lie in (1/2, 1), got H*K = {hk}"
            )));
        }
        let alpha = 2f64.powf(2.0 - k) * h * h * k * (k - 1.0);
        let beta = 2f64.powf(1.0 - k) * h * k * (2.0 * hk - 1.0);
        Ok(BifBmParams {
            h,
            k,
            hk,
            alpha,
            beta,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Self-similarity index `HK`.
    pub fn hk(&self) -> f64 {
        self.hk
    }

    /// `α_{H,K} = 2^{2-K} H² K (K-1)`; zero for fBm.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `β_{H,K} = 2^{1-K} H K (2HK-1)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `R_{H,K}(s, t)`.
    pub fn covariance(&self, s: f64, t: f64) -> Result<f64> {
        check_time(s)?;
        check_time(t)?;
        Ok(self.covariance_unchecked(s, t))
    }

    pub(crate) fn covariance_unchecked(&self, s: f64, t: f64) -> f64 {
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        if hi == 0.0 || lo < 1e-300 {
            return 0.0;
        }
        let scale = hi.powf(2.0 * self.hk);
        if lo == hi {
            return scale;
        }
        // Factor out hi^{2HK}: R = 2^{-K} hi^{2HK} [ e^x - e^y ] with x >= 0 >= y,
        // so expm1(x) - expm1(y) has no cancellation.
        let r = lo / hi;
        let x = self.k * r.powf(2.0 * self.h).ln_1p();
        let y = 2.0 * self.hk * (-r).ln_1p();
        2f64.powf(-self.k) * scale * (x.exp_m1() - y.exp_m1())
    }

    /// Mixed partial `∂²R/∂s∂t` off the diagonal:
    /// `α (t^{2H}+s^{2H})^{K-2} (ts)^{2H-1} + β |t-s|^{2HK-2}`.
    ///
    /// The diagonal is a hard error; the `β` term is integrable but unbounded there.
    pub fn covariance_density(&self, s: f64, t: f64) -> Result<f64> {
        if !(s > 0.0 && t > 0.0) || !s.is_finite() || !t.is_finite() {
            return Err(Error::domain(format!(
                "covariance density needs positive times, got ({s}, {t})"
            )));
        }
        if s == t {
            return Err(Error::domain(format!(
                "covariance density is singular on the diagonal s = t = {s}"
            )));
        }
        Ok(self.alpha_part(s, t) + self.beta_part(s - t))
    }

    /// `α (t^{2H}+s^{2H})^{K-2} (ts)^{2H-1}`, the non-stationary part of the density.
    pub(crate) fn alpha_part(&self, s: f64, t: f64) -> f64 {
        if self.alpha == 0.0 {
            return 0.0;
        }
        let two_h = 2.0 * self.h;
        self.alpha * (t.powf(two_h) + s.powf(two_h)).powf(self.k - 2.0) * (t * s).powf(two_h - 1.0)
    }

    /// `β |w|^{2HK-2}`, the stationary part of the density at lag `w`.
    pub(crate) fn beta_part(&self, w: f64) -> f64 {
        self.beta * w.abs().powf(2.0 * self.hk - 2.0)
    }

    /// Quasi-helix sandwich `(2^{-K}|t-s|^{2HK}, 2^{1-K}|t-s|^{2HK})`.
    pub fn increment_bounds(&self, s: f64, t: f64) -> Result<(f64, f64)> {
        check_time(s)?;
        check_time(t)?;
        let base = (t - s).abs().powf(2.0 * self.hk);
        Ok((2f64.powf(-self.k) * base, 2f64.powf(1.0 - self.k) * base))
    }

    /// `E[W_t - W_s]² = R(t,t) - 2R(s,t) + R(s,s)`.
    ///
    /// Evaluated as `2^{1-K}|t-s|^{2HK} - g` with
    /// `g = 2^{1-K}(t^{2H}+s^{2H})^K - t^{2HK} - s^{2HK} >= 0` (power-mean inequality),
    /// which keeps the value at or below the upper quasi-helix bound after rounding.
    pub fn increment_variance(&self, s: f64, t: f64) -> Result<f64> {
        check_time(s)?;
        check_time(t)?;
        if s == t {
            return Ok(0.0);
        }
        let two_h = 2.0 * self.h;
        let c = 2f64.powf(1.0 - self.k);
        let gap = c * (t.powf(two_h) + s.powf(two_h)).powf(self.k)
            - t.powf(2.0 * self.hk)
            - s.powf(2.0 * self.hk);
        let upper = c * (t - s).abs().powf(2.0 * self.hk);
        Ok(upper - gap.max(0.0))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be finite and nonnegative, got {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(h: f64, k: f64) -> BifBmParams {
        BifBmParams::new(h, k).unwrap()
    }

    #[test]
    fn validation() {
        let q = p(0.75, 0.8);
        assert!((q.hk() - 0.6).abs() < 1e-15);
        let err = BifBmParams::new(0.6, 0.8).unwrap_err().to_string();
        assert!(err.contains("HK"), "{err}");
        assert_eq!(p(0.7, 1.0).alpha(), 0.0);
        assert!(BifBmParams::new(1.0, 0.9).unwrap_err().to_string().contains("H must"));
        assert!(BifBmParams::new(0.9, 1.2).unwrap_err().to_string().contains("K must"));
        assert!(BifBmParams::new(f64::NAN, 0.9).is_err());
    }

    #[test]
    fn constants_signs() {
        for &(h, k) in &[(0.75, 0.8), (0.9, 0.7), (0.99, 0.52), (0.6, 1.0)] {
            let q = p(h, k);
            assert!(q.beta() > 0.0);
            assert!(q.alpha() <= 0.0);
        }
    }

    #[test]
    fn covariance_points() {
        let q = p(0.75, 0.8);
        assert_eq!(q.covariance(0.0, 0.7).unwrap(), 0.0);
        let d = q.covariance(0.3, 0.3).unwrap();
        assert!((d / 0.3f64.powf(1.2) - 1.0).abs() < 1e-12);
        let fbm = p(0.7, 1.0).covariance(1.0, 2.0).unwrap();
        // 2^{1.4} / 2
        assert!((fbm - 1.319_507_910_772_894).abs() < 1e-12, "{fbm}");
        assert!(q.covariance(-1.0, 1.0).is_err());
    }

    #[test]
    fn density_errors_and_fbm_value() {
        let q = p(0.7, 1.0);
        assert!(q.covariance_density(1.0, 1.0).is_err());
        assert!(q.covariance_density(0.0, 1.0).is_err());
        // β_{H,1} = H(2H-1) = 0.28 and |t-s| = 1.
        let d = q.covariance_density(1.0, 2.0).unwrap();
        assert!((d - 0.28).abs() < 1e-14, "{d}");
    }

    fn mixed_difference(q: &BifBmParams, s: f64, t: f64, h: f64) -> f64 {
        let r = |a, b| q.covariance(a, b).unwrap();
        (r(s + h, t + h) - r(s + h, t) - r(s, t + h) + r(s, t)) / (h * h)
    }

    #[test]
    fn density_matches_mixed_finite_difference() {
        for &(h, k) in &[(0.75, 0.8), (0.9, 0.7), (0.7, 1.0), (0.6, 0.95)] {
            let q = p(h, k);
            for &(s, t) in &[(0.3, 1.1), (1.0, 2.0), (0.5, 0.6), (2.0, 0.2)] {
                let d1 = mixed_difference(&q, s, t, 1e-3);
                let d2 = mixed_difference(&q, s, t, 5e-4);
                let extrapolated = 2.0 * d2 - d1;
                let exact = q.covariance_density(s, t).unwrap();
                assert!(
                    ((extrapolated - exact) / exact).abs() < 1e-4,
                    "H={h} K={k} s={s} t={t}: fd {extrapolated} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn increment_examples() {
        let q = p(0.75, 0.8);
        assert_eq!(q.increment_bounds(0.4, 0.4).unwrap(), (0.0, 0.0));
        assert_eq!(q.increment_variance(0.4, 0.4).unwrap(), 0.0);
        let (lo, hi) = q.increment_bounds(0.3, 1.1).unwrap();
        assert!((lo - 2f64.powf(-0.8) * 0.8f64.powf(1.2)).abs() < 1e-14);
        assert!((hi - 2f64.powf(0.2) * 0.8f64.powf(1.2)).abs() < 1e-14);
        let v = q.increment_variance(0.3, 1.1).unwrap();
        assert!(lo <= v && v <= hi);

        let f = p(0.7, 1.0);
        let (lo, hi) = f.increment_bounds(0.5, 1.5).unwrap();
        assert!((lo - hi / 2.0).abs() < 1e-15);
        let v = f.increment_variance(0.5, 1.5).unwrap();
        assert!((v - 1.0).abs() < 1e-14 && v <= hi);
    }

    proptest! {
        #[test]
        fn symmetric_and_fbm_reduction(s in 0.0f64..5.0, t in 0.0f64..5.0, h in 0.51f64..0.99) {
            let q = p(h, 1.0);
            let a = q.covariance(s, t).unwrap();
            prop_assert_eq!(a, q.covariance(t, s).unwrap());
            let fbm = 0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h));
            prop_assert!((a - fbm).abs() <= 1e-12 * (1.0 + fbm.abs()));
        }

        #[test]
        fn increment_variance_agrees_with_covariance_route(
            s in 0.0f64..3.0, t in 0.0f64..3.0, h in 0.7f64..0.99, k in 0.72f64..1.0,
        ) {
            let q = p(h, k);
            let r = |a, b| q.covariance(a, b).unwrap();
            let route = r(t, t) - 2.0 * r(s, t) + r(s, s);
            let direct = q.increment_variance(s, t).unwrap();
            prop_assert!((route - direct).abs() < 1e-12);
        }

        #[test]
        fn density_symmetric(s in 0.01f64..3.0, t in 0.01f64..3.0) {
            prop_assume!((s - t).abs() > 1e-6);
            let q = p(0.8, 0.9);
            prop_assert_eq!(q.covariance_density(s, t).unwrap(), q.covariance_density(t, s).unwrap());
        }
    }
}
