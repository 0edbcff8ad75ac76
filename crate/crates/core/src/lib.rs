//! Equivariant covariance estimation for high-dimensional Gaussian data.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`]: symmetric positive-definite primitives (spectral decomposition with
//!   descending order and a fixed sign rule, Cholesky, successive Schur reduction).
//! - [`estimators`]: the sample covariance, the triangular-group estimator, the
//!   diagonal-group estimator and the rotation-equivariant eigenvalue-shrinkage estimator.
//! - [`rmt`]: Stieltjes transforms, the Marchenko-Pastur law and the quantile map.
//! - [`loss_risk`]: Stein loss, closed-form minimum risks and Monte Carlo risk.
//! - [`hdtest`]: one-sample mean tests built on the estimators.
//! - [`sim`]: population models, Gaussian sampling and reproducible experiments.
//! - [`io`]: CSV ingestion and the JSON report document.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod hdtest;
pub mod io;
pub mod loss_risk;
pub mod matrix;
pub mod rmt;
pub mod runner;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use estimators::{
    dp_equivariant, sample_covariance, stein_triangular, tsai_eigenvalues, tsai_estimator, CovarianceEstimate,
    DataMatrix, Method, NConvention, ScatterMatrix, ShrinkageTable,
};
pub use matrix::{
    cholesky, spectral_decompose, successive_diagonalize, LowerTriangular, SchurReduction, SpectralDecomp, SymPd,
};
pub use rmt::MpModel;
