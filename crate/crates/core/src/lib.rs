//! Bootstrap particle filtering with exact oracles and moderate-deviation diagnostics.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: state space models, built-in examples and trajectory simulation;
//! * [`exact`]: exact filter recursions (finite, grid, Kalman) and a brute-force oracle;
//! * [`particle`]: the selection/mutation particle filter and its fluctuation decomposition;
//! * [`theory`]: asymptotic variances, covariance matrices, rate functions and concentration constants;
//! * [`experiments`]: the replication harness and the empirical checks built on it;
//! * [`cli`]: the `smc-mdp` command-line front end.

// `!(x > 0.0)` also rejects NaN, which is the intent throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod model;
pub mod particle;
pub mod quadrature;
pub mod stream;
pub mod theory;

pub use error::{Error, Result};
