//! Goodness-of-fit statistics: Kolmogorov–Smirnov (one and two sample) and
//! Anderson–Darling against a fully specified normal law.

use serde::Serialize;
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdReport {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn normal_cdf(x: f64, sd: f64) -> f64 {
    0.5 * erfc(-x / (sd * SQRT_2))
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form converges fast for small λ.
        let w = PI * PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * w).exp();
        }
        1.0 - (2.0 * PI).sqrt() / lambda * cdf
    } else {
        let mut sf = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sf += if k % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sf).clamp(0.0, 1.0)
    }
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sn = effective_n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite value in sample"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample KS statistic `sup |F_a - F_b|` with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS test needs nonempty samples"));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsReport {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    })
}

/// One-sample KS test against `N(0, sd²)`.
pub fn ks_normal(xs: &[f64], sd: f64) -> Result<KsReport> {
    if xs.is_empty() {
        return Err(Error::domain("KS test needs a nonempty sample"));
    }
    let v = sorted(xs)?;
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal_cdf(x, sd);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    Ok(KsReport {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// Anderson–Darling test of a sample against the fully specified `N(0, sd²)`.
///
/// The p-value uses Marsaglia & Marsaglia's approximation of the finite-`n`
/// distribution (asymptotic law plus an `n`-dependent correction).
pub fn anderson_darling_normal(xs: &[f64], sd: f64) -> Result<AdReport> {
    if xs.len() < 8 {
        return Err(Error::domain("Anderson-Darling test needs at least 8 observations"));
    }
    let v = sorted(xs)?;
    let n = v.len();
    let tiny = f64::MIN_POSITIVE;
    let mut s = 0.0;
    for i in 0..n {
        let lo = normal_cdf(v[i], sd).max(tiny);
        let hi = (1.0 - normal_cdf(v[n - 1 - i], sd)).max(tiny);
        s += (2 * i + 1) as f64 * (lo.ln() + hi.ln());
    }
    let a2 = -(n as f64) - s / n as f64;
    let p = 1.0 - ad_cdf(n as f64, a2);
    Ok(AdReport {
        statistic: a2,
        p_value: p.clamp(0.0, 1.0),
    })
}

fn ad_inf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012
                + (0.247105
                    - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z)
                    * z)
    } else {
        (-(1.0776
            - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z)
            .exp())
        .exp()
    }
}

fn ad_errfix(n: f64, x: f64) -> f64 {
    let c = 0.01265 + 0.1757 / n;
    if x < c {
        let t = x / c;
        let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
        t * (0.0037 / (n * n) + 0.00078 / n + 0.00006)
    } else if x < 0.8 {
        let t = (x - c) / (0.8 - c);
        let t = -0.00022633
            + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t;
        t * (0.04213 / n + 0.01365 / (n * n))
    } else {
        let t = -130.2137
            + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x;
        t / n
    }
}

fn ad_cdf(n: f64, z: f64) -> f64 {
    let x = ad_inf(z);
    x + ad_errfix(n, x)
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_tail_values() {
        // Classical critical values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
        assert!((kolmogorov_sf(1.949) - 0.001).abs() < 1e-4);
        // Both series agree at the switch point.
        let lo = {
            let lambda: f64 = 1.18;
            let mut sf = 0.0;
            for k in 1..=100 {
                let kf = k as f64;
                let term = (-2.0 * kf * kf * lambda * lambda).exp();
                sf += if k % 2 == 1 { term } else { -term };
            }
            2.0 * sf
        };
        assert!((kolmogorov_sf(1.18) - lo).abs() < 1e-12);
    }

    #[test]
    fn ad_asymptotic_critical_values() {
        // Upper percentage points of the fully specified A² law.
        assert!((1.0 - ad_inf(2.492) - 0.05).abs() < 2e-3);
        assert!((1.0 - ad_inf(3.857) - 0.01).abs() < 1e-3);
        assert!((1.0 - ad_inf(5.97) - 0.001).abs() < 2e-4);
    }

    #[test]
    fn ad_detects_scale_error() {
        let xs: Vec<f64> = (1..=200)
            .map(|i| {
                // Normal quantiles via bisection on the cdf.
                let p = i as f64 / 201.0;
                let (mut lo, mut hi) = (-10.0, 10.0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if normal_cdf(mid, 1.0) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        let good = anderson_darling_normal(&xs, 1.0).unwrap();
        assert!(good.p_value > 0.5, "{good:?}");
        let bad = anderson_darling_normal(&xs, 2.0).unwrap();
        assert!(bad.p_value < 1e-3, "{bad:?}");
        assert!(ks_normal(&xs, 1.0).unwrap().p_value > 0.5);
    }

    #[test]
    fn two_sample_ks_identical_and_shifted() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 50.0).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-12);
        assert!(r.p_value < 1e-6);
        assert!(ks_two_sample(&[], &a).is_err());
    }
}
