//! Covariance estimation for approximate factor models with observable factors.
//!
//! The estimator regresses each series on the factors, thresholds the residual
//! covariance entry by entry, and recombines it with the fitted factor part:
//! `Σ̂ = B̂ ĉov(f) B̂′ + Σ̂_u^T`. The precision matrix follows from the
//! Woodbury identity using only `K × K` and residual-covariance inversions,
//! which keeps it well defined when there are more series than observations.
//!
//! Modules:
//! - [`norms`]: matrix norms, eigenvalue queries, sparsity degree
//! - [`factor`]: OLS loadings, residuals, sample covariances
//! - [`threshold`]: adaptive thresholding and guarded SPD inversion
//! - [`assembly`]: low-rank-plus-sparse assembly, Woodbury precision, error reports
//! - [`sur`]: seemingly unrelated regressions and feasible GLS
//! - [`simulation`]: the calibrated data-generating process
//! - [`experiment`]: the Monte Carlo harness behind the `simulate` command

// `!(x > 0.0)` is used on purpose so NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod config;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod io;
pub mod norms;
pub mod simulation;
pub mod sur;
pub mod threshold;

pub use assembly::{
    assemble_sigma, error_report, portfolio_variance_bound, woodbury_precision, ErrorReport,
    FactorCovEstimate,
};
pub use error::{FactorCovError, Result};
pub use factor::{factor_sample_cov, ols_loadings, residuals, sample_cov, FactorFit, Panel};
pub use norms::{
    frobenius_norm, is_positive_definite, max_norm, min_eigenvalue, operator_norm, sigma_norm,
    sparsity_degree, NormBundle, SymMatrix,
};
pub use threshold::{
    adaptive_threshold, correlation_threshold_path, invert_spd, residual_moments, threshold_level,
    threshold_level_general, ResidualMoments, ThresholdedCovariance,
};
