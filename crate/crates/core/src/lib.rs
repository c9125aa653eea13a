//! Simulation and verification toolkit for log-correlated Gaussian fields and
//! their subcritical and critical multiplicative chaos measures.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`] evaluates covariance kernels and assembles regularized
//!   covariance matrices.
//! * [`field`] draws exact Gaussian samples on grids.
//! * [`gmc`] turns field samples into chaos masses and evaluates the
//!   closed-form tail constants.
//! * [`bessel`] simulates Brownian and BES(3) paths with hitting-time tools.
//! * [`fusion`] implements the Brownian toy model behind the critical
//!   tail constant.
//! * [`asymptotics`] estimates tails and Laplace functionals and fits
//!   leading coefficients.
//!
//! Randomness flows through [`rng::RngPolicy`], which derives one counter-based
//! stream per replica so results never depend on scheduling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bessel;
mod error;
pub mod field;
pub mod fusion;
pub mod geometry;
pub mod gmc;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
