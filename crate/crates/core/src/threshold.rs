//! Entry-adaptive hard thresholding of a residual covariance matrix.
//!
//! Each off-diagonal residual covariance `σ̂_ij` is kept only when
//! `|σ̂_ij| ≥ √θ̂_ij · ω`, where `θ̂_ij` is the sample variance of the
//! products `û_it û_jt`. Entries with noisy products therefore need to be
//! larger to survive. The diagonal is never thresholded.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{FactorCovError, Result};
use crate::norms::{operator_norm, SymMatrix, RELATIVE_EIGEN_CUTOFF};

/// Residual covariance `σ̂_ij = T^{-1} Σ_t û_it û_jt` (not demeaned) and the
/// variability `θ̂_ij = T^{-1} Σ_t (û_it û_jt − σ̂_ij)²` of each entry.
#[derive(Debug, Clone)]
pub struct ResidualMoments {
    pub sigma_hat: SymMatrix,
    pub theta_hat: SymMatrix,
    pub t: usize,
}

impl ResidualMoments {
    pub fn dim(&self) -> usize {
        self.sigma_hat.dim()
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdedCovariance {
    pub matrix: SymMatrix,
    pub omega: f64,
    /// `p × p`, row-major; `true` where the entry survived.
    kept: Vec<bool>,
}

impl ThresholdedCovariance {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_kept(&self, i: usize, j: usize) -> bool {
        self.kept[i * self.dim() + j]
    }

    /// Number of surviving off-diagonal entries (both triangles counted).
    pub fn kept_off_diagonal(&self) -> usize {
        let p = self.dim();
        self.kept
            .iter()
            .enumerate()
            .filter(|(k, &kept)| kept && k / p != k % p)
            .count()
    }

    /// The mask as a 0/1 matrix, for export.
    pub fn mask_matrix(&self) -> DMatrix<f64> {
        let p = self.dim();
        DMatrix::from_fn(p, p, |i, j| if self.is_kept(i, j) { 1.0 } else { 0.0 })
    }

    /// Wraps an unthresholded covariance (every entry kept, `ω = 0`).
    pub fn unthresholded(matrix: SymMatrix) -> Self {
        let p = matrix.dim();
        ThresholdedCovariance {
            matrix,
            omega: 0.0,
            kept: vec![true; p * p],
        }
    }
}

pub fn residual_moments(residuals: &DMatrix<f64>) -> Result<ResidualMoments> {
    let (p, t) = residuals.shape();
    if t < 2 {
        return Err(FactorCovError::InsufficientData { needed: 2, got: t });
    }
    if p == 0 {
        return Err(FactorCovError::shape("residual_moments", "p >= 1", 0));
    }
    let rows: Vec<Vec<f64>> = residuals
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let tf = t as f64;

    // lower triangle, row i holds entries (i, 0..=i)
    let lower: Vec<Vec<(f64, f64)>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let ui = &rows[i];
            (0..=i)
                .map(|j| {
                    let uj = &rows[j];
                    let mut sum = 0.0;
                    for s in 0..t {
                        sum += ui[s] * uj[s];
                    }
                    let sigma = sum / tf;
                    let mut dev = 0.0;
                    for s in 0..t {
                        let d = ui[s] * uj[s] - sigma;
                        dev += d * d;
                    }
                    (sigma, dev / tf)
                })
                .collect()
        })
        .collect();

    let mut sigma = DMatrix::zeros(p, p);
    let mut theta = DMatrix::zeros(p, p);
    for (i, row) in lower.iter().enumerate() {
        for (j, &(s, th)) in row.iter().enumerate() {
            sigma[(i, j)] = s;
            theta[(i, j)] = th;
        }
    }
    Ok(ResidualMoments {
        sigma_hat: SymMatrix::from_lower(sigma),
        theta_hat: SymMatrix::from_lower(theta),
        t,
    })
}

/// `ω_T = c · k · √(ln p / t)`.
pub fn threshold_level(c: f64, k: usize, p: usize, t: usize) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(FactorCovError::Domain(format!(
            "threshold constant must be positive, got {c}"
        )));
    }
    if k == 0 {
        return Err(FactorCovError::Domain(
            "number of factors must be positive".into(),
        ));
    }
    Ok(c * k as f64 * log_ratio(p, t)?.sqrt())
}

/// `ω_T = c · (√(ln p / t) + a_t)` for a caller-supplied residual estimation rate `a_t`.
pub fn threshold_level_general(c: f64, p: usize, t: usize, a_t: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(FactorCovError::Domain(format!(
            "threshold constant must be positive, got {c}"
        )));
    }
    if !(a_t >= 0.0) || !a_t.is_finite() {
        return Err(FactorCovError::Domain(format!(
            "rate a_t must be nonnegative, got {a_t}"
        )));
    }
    Ok(c * (log_ratio(p, t)?.sqrt() + a_t))
}

fn log_ratio(p: usize, t: usize) -> Result<f64> {
    if p < 2 {
        return Err(FactorCovError::Domain(format!(
            "threshold level needs p >= 2, got {p}"
        )));
    }
    if t == 0 {
        return Err(FactorCovError::Domain(
            "threshold level needs t >= 1".into(),
        ));
    }
    Ok((p as f64).ln() / t as f64)
}

/// Keeps `σ̂_ij` iff `|σ̂_ij| ≥ √θ̂_ij · omega`; the diagonal always survives.
pub fn adaptive_threshold(moments: &ResidualMoments, omega: f64) -> ThresholdedCovariance {
    let p = moments.dim();
    let sigma = &moments.sigma_hat;
    let theta = &moments.theta_hat;
    let mut kept = vec![true; p * p];
    let mut out = sigma.as_matrix().clone();
    for j in 0..p {
        for i in (j + 1)..p {
            let keep = sigma[(i, j)].abs() >= theta[(i, j)].sqrt() * omega;
            if !keep {
                out[(i, j)] = 0.0;
                out[(j, i)] = 0.0;
                kept[i * p + j] = false;
                kept[j * p + i] = false;
            }
        }
    }
    ThresholdedCovariance {
        matrix: SymMatrix::from_lower(out),
        omega,
        kept,
    }
}

/// Thresholds the correlation matrix of `sigma_hat` at a common level `lambda`
/// and maps the survivors back to covariances. Kept entries are the original
/// covariances untouched, so `lambda = 0` returns the input and `lambda = 1`
/// returns its diagonal, both exactly.
pub fn correlation_threshold_path(sigma_hat: &SymMatrix, lambda: f64) -> Result<SymMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(FactorCovError::Domain(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let p = sigma_hat.dim();
    let diag: Vec<f64> = (0..p).map(|i| sigma_hat[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(FactorCovError::Domain(format!(
            "correlation path needs a positive diagonal; entry {i} is {}",
            diag[i]
        )));
    }
    let mut out = sigma_hat.clone();
    for j in 0..p {
        for i in (j + 1)..p {
            let r = sigma_hat[(i, j)] / (diag[i] * diag[j]).sqrt();
            // at lambda = 1 rounding can push |r| to exactly 1; drop everything
            if lambda >= 1.0 || r.abs() < lambda {
                out.set(i, j, 0.0);
            }
        }
    }
    Ok(out)
}

/// Inverse of a symmetric positive definite matrix. Fails with the minimum
/// eigenvalue when `λ_min ≤ 1e-12 · ‖m‖`.
pub fn invert_spd(m: &SymMatrix) -> Result<SymMatrix> {
    let eigen = m.eigen()?;
    let scale = operator_norm(m)?;
    if !(scale > 0.0) || eigen.min() <= RELATIVE_EIGEN_CUTOFF * scale {
        return Err(FactorCovError::NotPositiveDefinite {
            context: "invert_spd".into(),
            min_eigenvalue: eigen.min(),
        });
    }
    eigen.inverse("invert_spd")
}
