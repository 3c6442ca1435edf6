//! One-dimensional quadrature rules shared by the simulator and the
//! limiting-variance computation.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod 7/15 panel: (Kronrod value, |Kronrod − Gauss|).
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol·|I|)`. Nodes never touch the
/// endpoints, so integrable endpoint singularities are tolerated.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    const MAX_PANELS: usize = 4000;
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let mut panels = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::numerical(format!("non-finite integrand on [{a}, {b}]")));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error });
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::numerical(format!(
                "adaptive quadrature on [{a}, {b}] did not reach tolerance {abs_tol:e} (estimate {error:e})"
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one panel");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Three-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre3(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let x = h * (0.6f64).sqrt();
    h * (5.0 * f(c - x) + 8.0 * f(c) + 5.0 * f(c + x)) / 9.0
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels + panels % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_transcendentals() {
        let r = integrate(|x| x.powi(6), -1.0, 1.0, 1e-14, 0.0).unwrap();
        assert!((r.value - 2.0 / 7.0).abs() < 1e-14);
        let r = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-13, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-13);
    }

    #[test]
    fn weak_endpoint_singularity() {
        // ∫_0^1 x^{-0.4} dx = 1/0.6
        let r = integrate(|x| x.powf(-0.4), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((r.value - 1.0 / 0.6).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn fixed_rules() {
        assert!((gauss_legendre3(|x| x.powi(5) + x * x, 0.0, 2.0) - (64.0 / 6.0 + 8.0 / 3.0)).abs() < 1e-12);
        assert!((simpson(|x| x.powi(3), 0.0, 1.0, 2) - 0.25).abs() < 1e-15);
        assert!((simpson(f64::exp, 0.0, 1.0, 64) - (1f64.exp() - 1.0)).abs() < 1e-8);
    }
}
