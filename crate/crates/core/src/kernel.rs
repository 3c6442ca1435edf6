//! Compactly supported smoothing kernels with vanishing moments.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_POLY_ORDER: u32 = 6;

/// Config-level kernel selector: `"uniform"` or `"poly:k"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelId {
    Uniform,
    Poly(u32),
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(KernelId::Uniform);
        }
        if let Some(k) = s.strip_prefix("poly:") {
            if let Ok(k) = k.parse::<u32>() {
                return Ok(KernelId::Poly(k));
            }
        }
        Err(Error::domain(format!(
            "unknown kernel `{s}`; expected \"uniform\" or \"poly:k\""
        )))
    }
}

impl TryFrom<String> for KernelId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelId> for String {
    fn from(id: KernelId) -> String {
        id.to_string()
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelId::Uniform => write!(f, "uniform"),
            KernelId::Poly(k) => write!(f, "poly:{k}"),
        }
    }
}

impl KernelId {
    pub fn build(self) -> Result<Kernel> {
        match self {
            KernelId::Uniform => Ok(Kernel::uniform()),
            KernelId::Poly(k) => Kernel::poly(k),
        }
    }
}

/// Polynomial kernel `G(u) = Σ a_i u^i` on `[A, B]`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    name: String,
    lower: f64,
    upper: f64,
    order: u32,
    coeffs: Vec<f64>,
}

/// Monomial coefficients of the Legendre polynomials `P_0 … P_n`.
fn legendre_monomials(n: usize) -> Vec<Vec<f64>> {
    let mut p = vec![vec![1.0], vec![0.0, 1.0]];
    for m in 1..n {
        let mf = m as f64;
        let mut next = vec![0.0; m + 2];
        for (i, c) in p[m].iter().enumerate() {
            next[i + 1] += (2.0 * mf + 1.0) * c / (mf + 1.0);
        }
        for (i, c) in p[m - 1].iter().enumerate() {
            next[i] -= mf * c / (mf + 1.0);
        }
        p.push(next);
    }
    p.truncate(n + 1);
    p
}

fn monomial_integral(p: usize, a: f64, b: f64) -> f64 {
    let e = p as i32 + 1;
    (b.powi(e) - a.powi(e)) / e as f64
}

impl Kernel {
    /// `G = 1` on `[-1/2, 1/2]`; order 1 by symmetry.
    pub fn uniform() -> Kernel {
        Kernel {
            name: KernelId::Uniform.to_string(),
            lower: -0.5,
            upper: 0.5,
            order: 1,
            coeffs: vec![1.0],
        }
    }

    /// Kernel on `[-1, 1]` spanned by the even Legendre polynomials of degree
    /// `≤ k`, with unit mass and vanishing moments `1..=k`. Odd moments vanish
    /// by symmetry, so even `k` yields order `k + 1`.
    pub fn poly(k: u32) -> Result<Kernel> {
        if k > MAX_POLY_ORDER {
            return Err(Error::domain(format!(
                "polynomial kernel order {k} exceeds {MAX_POLY_ORDER}"
            )));
        }
        let degrees: Vec<usize> = (0..=k as usize).step_by(2).collect();
        let legendre = legendre_monomials(k as usize);
        let m = degrees.len();
        // Row r: moment of order degrees[r]; column c: basis P_{degrees[c]}.
        let system = DMatrix::from_fn(m, m, |r, c| {
            legendre[degrees[c]]
                .iter()
                .enumerate()
                .map(|(i, a)| a * monomial_integral(i + degrees[r], -1.0, 1.0))
                .sum::<f64>()
        });
        let mut rhs = DVector::zeros(m);
        rhs[0] = 1.0;
        let weights = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("singular kernel moment system"))?;
        let mut coeffs = vec![0.0; k as usize + 1];
        for (c, &d) in degrees.iter().enumerate() {
            for (i, a) in legendre[d].iter().enumerate() {
                coeffs[i] += weights[c] * a;
            }
        }
        Ok(Kernel {
            name: KernelId::Poly(k).to_string(),
            lower: -1.0,
            upper: 1.0,
            order: k,
            coeffs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `[A, B]`.
    pub fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Number of leading moments guaranteed to vanish.
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u < self.lower || u > self.upper {
            return 0.0;
        }
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * u + a)
    }

    /// `∫_lo^hi G(u) du` with the limits clipped to the support.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.lower);
        let hi = hi.min(self.upper);
        if lo >= hi {
            return 0.0;
        }
        self.antiderivative(hi) - self.antiderivative(lo)
    }

    fn antiderivative(&self, u: f64) -> f64 {
        let inner = self
            .coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, a)| acc * u + a / (i + 1) as f64);
        inner * u
    }

    /// `∫ u^j G(u) du`, exact for the polynomial representation.
    pub fn moment(&self, j: u32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a * monomial_integral(i + j as usize, self.lower, self.upper))
            .sum()
    }

    /// `G(·/s)/s` on `[sA, sB]`.
    pub fn rescaled(&self, s: f64) -> Result<Kernel> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("scale must be positive, got {s}")));
        }
        Ok(Kernel {
            name: format!("{}@{s}", self.name),
            lower: s * self.lower,
            upper: s * self.upper,
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, a)| a / s.powi(i as i32 + 1))
                .collect(),
        })
    }
}
