//! Exact Gaussian sampling of bifBm on a grid via Cholesky factorization.
//!
//! Increments of bifBm are not stationary for `K < 1`, so circulant embedding
//! does not apply; the full covariance of `(W_{t_1}, …, W_{t_n})` is factored
//! instead (`W_0 = 0` is excluded from the matrix and pinned exactly).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bifbm::BifBmParams;
use crate::error::{Error, Result};
use crate::path::{PathLabel, SamplePath, TimeGrid};
use crate::stats::{ks_two_sample, KsReport};

pub const DEFAULT_MAX_STEPS: usize = 8192;

/// Jitter multipliers of `trace / n` tried in order after a failed factorization.
const JITTER_LEVELS: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// RNG for replication stream `stream` of master seed `seed`.
///
/// ChaCha streams are counter-based, so replication `r` is reproducible no
/// matter how work is scheduled across threads.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lower-triangular factor of the bifBm covariance on `t_1, …, t_n`.
#[derive(Debug, Clone)]
pub struct CovFactor {
    grid: TimeGrid,
    params: Option<BifBmParams>,
    // Row i occupies packed[i(i+1)/2 .. (i+1)(i+2)/2].
    packed: Vec<f64>,
    jitter: f64,
}

fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl CovFactor {
    pub fn build(params: &BifBmParams, grid: TimeGrid) -> Result<Self> {
        Self::build_with_cap(params, grid, DEFAULT_MAX_STEPS)
    }

    pub fn build_with_cap(params: &BifBmParams, grid: TimeGrid, max_steps: usize) -> Result<Self> {
        let mut f = Self::from_covariance(grid, max_steps, |s, t| params.covariance_unchecked(s, t))
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::numerical(format!(
                    "{msg} (H = {}, K = {})",
                    params.h(),
                    params.k()
                )),
                other => other,
            })?;
        f.params = Some(*params);
        Ok(f)
    }

    /// Factor of an arbitrary covariance function on `t_1, …, t_n`.
    pub fn from_covariance(
        grid: TimeGrid,
        max_steps: usize,
        covariance: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let n = grid.steps();
        if n > max_steps {
            return Err(Error::domain(format!(
                "grid of {n} steps exceeds the factorization cap of {max_steps}"
            )));
        }
        let times: Vec<f64> = (1..=n).map(|i| grid.time(i)).collect();
        let mut cov = vec![0.0; row_start(n)];
        for i in 0..n {
            let row = &mut cov[row_start(i)..row_start(i + 1)];
            for (j, c) in row.iter_mut().enumerate() {
                *c = covariance(times[i], times[j]);
            }
        }
        let trace: f64 = (0..n).map(|i| cov[row_start(i) + i]).sum();

        let mut packed = cov.clone();
        let mut jitter = 0.0;
        let mut ok = cholesky_packed(&mut packed, n, jitter);
        for level in JITTER_LEVELS {
            if ok {
                break;
            }
            jitter = level * trace / n as f64;
            packed.copy_from_slice(&cov);
            ok = cholesky_packed(&mut packed, n, jitter);
        }
        if !ok {
            return Err(Error::numerical(format!(
                "covariance factorization failed on {n} steps over [0, {}] even with jitter {jitter:e}",
                grid.horizon()
            )));
        }
        Ok(CovFactor {
            grid,
            params: None,
            packed,
            jitter,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Parameters, when built from a bifBm covariance.
    pub fn params(&self) -> Option<&BifBmParams> {
        self.params.as_ref()
    }

    /// Diagonal jitter that was added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Row `i` of the factor (times `t_{i+1}`), entries `0..=i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.packed[row_start(i)..row_start(i + 1)]
    }

    pub fn dim(&self) -> usize {
        self.grid.steps()
    }

    /// `L z` with `W_0 = 0` prepended.
    pub fn apply(&self, z: &[f64]) -> SamplePath {
        let n = self.dim();
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        for i in 0..n {
            values.push(dot(self.row(i), &z[..=i]));
        }
        SamplePath {
            grid: self.grid,
            values,
            label: PathLabel::Bifbm,
        }
    }

    /// One path drawn from the given RNG.
    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> SamplePath {
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        self.apply(&z)
    }

    /// The path for stream `stream` of `seed`.
    pub fn sample_stream(&self, seed: u64, stream: u64) -> SamplePath {
        self.sample_with(&mut stream_rng(seed, stream))
    }

    /// `count` paths; path `r` uses stream `r` of `seed`.
    pub fn sample_paths(&self, count: usize, seed: u64) -> Result<Vec<SamplePath>> {
        if count == 0 {
            return Err(Error::domain("path count must be at least 1"));
        }
        Ok((0..count as u64)
            .into_par_iter()
            .map(|r| self.sample_stream(seed, r))
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Four dot products against a shared right-hand side, which is read once.
fn dot4(rows: [&[f64]; 4], b: &[f64]) -> [f64; 4] {
    let n = b.len();
    let mut acc = [[0.0f64; 4]; 4];
    let full = n / 4 * 4;
    let mut k = 0;
    while k < full {
        let y = &b[k..k + 4];
        for (r, row) in rows.iter().enumerate() {
            let x = &row[k..k + 4];
            for l in 0..4 {
                acc[r][l] += x[l] * y[l];
            }
        }
        k += 4;
    }
    let mut out = [0.0; 4];
    for r in 0..4 {
        let mut tail = 0.0;
        for k in full..n {
            tail += rows[r][k] * b[k];
        }
        out[r] = (acc[r][0] + acc[r][1]) + (acc[r][2] + acc[r][3]) + tail;
    }
    out
}

/// In-place row-oriented Cholesky of a packed lower triangle with `jitter` added
/// to the diagonal. Returns false on a nonpositive or non-finite pivot.
fn cholesky_packed(a: &mut [f64], n: usize, jitter: f64) -> bool {
    const GROUP: usize = 4;
    let mut g0 = 0;
    while g0 < n {
        let g1 = (g0 + GROUP).min(n);
        let (done, rest) = a.split_at_mut(row_start(g0));
        // Columns left of the group only need finished rows.
        if g1 - g0 == GROUP {
            let (r0, rest) = rest.split_at_mut(g0 + 1);
            let (r1, rest) = rest.split_at_mut(g0 + 2);
            let (r2, r3) = rest.split_at_mut(g0 + 3);
            for j in 0..g0 {
                let lj = &done[row_start(j)..row_start(j + 1)];
                let d = dot4([&r0[..j], &r1[..j], &r2[..j], &r3[..j]], &lj[..j]);
                let pivot = lj[j];
                r0[j] = (r0[j] - d[0]) / pivot;
                r1[j] = (r1[j] - d[1]) / pivot;
                r2[j] = (r2[j] - d[2]) / pivot;
                r3[j] = (r3[j] - d[3]) / pivot;
            }
        } else {
            for i in g0..g1 {
                let off = row_start(i) - row_start(g0);
                for j in 0..g0 {
                    let lj = &done[row_start(j)..row_start(j + 1)];
                    let ri = &mut rest[off..off + i + 1];
                    let s = ri[j] - dot(&ri[..j], &lj[..j]);
                    ri[j] = s / lj[j];
                }
            }
        }
        // Triangle inside the group.
        for i in g0..g1 {
            for j in g0..=i {
                let (before, row_i) = a.split_at_mut(row_start(i));
                let row_i = &mut row_i[..i + 1];
                if j == i {
                    let d = row_i[i] + jitter - dot(&row_i[..i], &row_i[..i]);
                    if !(d > 0.0 && d.is_finite()) {
                        return false;
                    }
                    row_i[i] = d.sqrt();
                } else {
                    let lj = &before[row_start(j)..row_start(j + 1)];
                    row_i[j] = (row_i[j] - dot(&row_i[..j], &lj[..j])) / lj[j];
                }
            }
        }
        g0 = g1;
    }
    true
}

/// Two-sample comparison of `W_{aT}` with `a^{exponent} W_T`.
#[derive(Debug, Clone, Serialize)]
pub struct SelfSimilarityReport {
    pub scale: f64,
    pub exponent: f64,
    pub count: usize,
    pub ks: KsReport,
}

const SELF_SIMILARITY_STEPS: usize = 16;

/// KS check of self-similarity with index `HK`.
pub fn self_similarity_check(
    params: &BifBmParams,
    horizon: f64,
    scale: f64,
    count: usize,
    seed: u64,
) -> Result<SelfSimilarityReport> {
    self_similarity_check_with_exponent(params, horizon, scale, params.hk(), count, seed)
}

/// As [`self_similarity_check`] but scaling by `a^{exponent}`; a wrong exponent is a negative control.
pub fn self_similarity_check_with_exponent(
    params: &BifBmParams,
    horizon: f64,
    scale: f64,
    exponent: f64,
    count: usize,
    seed: u64,
) -> Result<SelfSimilarityReport> {
    if !(scale > 0.0 && (scale * horizon).is_finite()) {
        return Err(Error::domain(format!("scale must be positive, got {scale}")));
    }
    if count == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let wide = CovFactor::build(params, TimeGrid::new(scale * horizon, SELF_SIMILARITY_STEPS)?)?;
    let base = CovFactor::build(params, TimeGrid::new(horizon, SELF_SIMILARITY_STEPS)?)?;
    let factor = scale.powf(exponent);
    // Disjoint stream ranges keep the two samples independent.
    let offset = 1u64 << 62;
    let lhs: Vec<f64> = (0..count as u64)
        .into_par_iter()
        .map(|r| wide.sample_stream(seed, r).terminal())
        .collect();
    let rhs: Vec<f64> = (0..count as u64)
        .into_par_iter()
        .map(|r| factor * base.sample_stream(seed, offset + r).terminal())
        .collect();
    Ok(SelfSimilarityReport {
        scale,
        exponent,
        count,
        ks: ks_two_sample(&lhs, &rhs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruction_error(f: &CovFactor) -> f64 {
        let n = f.dim();
        let g = f.grid();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let lhs = dot(&f.row(i)[..=j], &f.row(j)[..=j]);
                let mut rhs = f.params().unwrap().covariance(g.time(i + 1), g.time(j + 1)).unwrap();
                if i == j {
                    rhs += f.jitter();
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    #[test]
    fn brownian_factor_has_iid_increments() {
        // H = 1/2, K = 1 is outside the admissible HK range, so build the
        // Brownian covariance min(s, t) directly.
        let g = TimeGrid::new(2.0, 8).unwrap();
        let f = CovFactor::from_covariance(g, DEFAULT_MAX_STEPS, f64::min).unwrap();
        let dt = g.dt();
        for i in 0..8 {
            for (j, &v) in f.row(i).iter().enumerate() {
                assert!((v - dt.sqrt()).abs() < 1e-12, "row {i} col {j}");
            }
        }
        // Increments of L z are then sqrt(Δ) z_i: i.i.d. with variance Δ.
        let z: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let path = f.apply(&z);
        for (d, zi) in path.increments().zip(&z) {
            assert!((d - dt.sqrt() * zi).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_on_various_grids() {
        for &(h, k, n) in &[(0.75, 0.8, 16), (0.9, 0.7, 64), (0.99, 0.6, 33), (0.6, 1.0, 50)] {
            let q = BifBmParams::new(h, k).unwrap();
            let f = CovFactor::build(&q, TimeGrid::new(1.0, n).unwrap()).unwrap();
            assert!(reconstruction_error(&f) <= 1e-8 + f.jitter(), "H={h} K={k} n={n}");
        }
    }

    #[test]
    fn cap_is_enforced() {
        let q = BifBmParams::new(0.75, 0.8).unwrap();
        let g = TimeGrid::new(1.0, 100).unwrap();
        let err = CovFactor::build_with_cap(&q, g, 64).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let q = BifBmParams::new(0.75, 0.8).unwrap();
        let f = CovFactor::build(&q, TimeGrid::new(1.0, 32).unwrap()).unwrap();
        let a = f.sample_paths(1, 7).unwrap();
        let b = f.sample_paths(1, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].values[0], 0.0);
        let many = f.sample_paths(3, 7).unwrap();
        assert_eq!(many[0], a[0]);
        assert_ne!(many[1], many[0]);
        assert!(f.sample_paths(0, 7).is_err());
    }

    #[test]
    fn dot4_matches_dot() {
        let rows: Vec<Vec<f64>> = (0..4).map(|r| (0..11).map(|k| (r * 13 + k) as f64 * 0.1).collect()).collect();
        let b: Vec<f64> = (0..11).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let d = dot4([&rows[0], &rows[1], &rows[2], &rows[3]], &b);
        for r in 0..4 {
            assert!((d[r] - dot(&rows[r], &b)).abs() < 1e-12);
        }
    }
}
