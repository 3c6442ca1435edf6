//! Simulation and nonparametric estimation for linear SDEs driven by
//! bifractional Brownian motion.
//!
//! The observed process solves `dX = θ(t) X dt + ε dW^{H,K}` with `X_0 = x0`
//! on `[0, T]`, where `W^{H,K}` is a bifractional Brownian motion with
//! `HK ∈ (1/2, 1)`. The crate provides
//!
//! * exact Gaussian sampling of `W^{H,K}` on a grid ([`sampler`]),
//! * trend expressions for `θ(t)` ([`trend`]) and trajectory simulation ([`sde`]),
//! * compactly supported higher-order kernels ([`kernel`]) and the kernel
//!   estimators of `θ(t) x_t` and `θ(t)` ([`estimator`]),
//! * rate exponents and the limiting variance `σ²_{H,K}` ([`asymptotics`]),
//! * Monte Carlo experiments checking the small-noise rates and the limit
//!   law ([`harness`]), driven from JSON configs by the `bifbm` binary ([`cli`]).

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bifbm;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod path;
pub mod quadrature;
pub mod sampler;
pub mod sde;
pub mod stats;
pub mod trend;

pub use bifbm::BifBmParams;
pub use error::{Error, Result};
pub use kernel::Kernel;
pub use path::{PathLabel, SamplePath, TimeGrid};
pub use sampler::CovFactor;
pub use trend::TrendExpr;
