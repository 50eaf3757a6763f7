//! Low-rank-plus-sparse covariance `B̂ ĉov(f) B̂′ + Σ̂_u^T`, its precision via
//! the Sherman–Morrison–Woodbury identity, and estimation-error reporting.

use nalgebra::{DMatrix, DVector};

use crate::error::{FactorCovError, Result};
use crate::factor::FactorFit;
use crate::norms::{frobenius_norm, max_norm, operator_norm, SigmaNormalizer, SymMatrix};
use crate::threshold::{invert_spd, ThresholdedCovariance};

/// The factor-structured covariance estimate, kept in its parts. The dense
/// `p × p` matrix is only formed by [`assemble_sigma`].
#[derive(Debug, Clone)]
pub struct FactorCovEstimate {
    loadings: DMatrix<f64>,
    factor_cov: SymMatrix,
    idio_cov: ThresholdedCovariance,
}

impl FactorCovEstimate {
    pub fn new(
        loadings: DMatrix<f64>,
        factor_cov: SymMatrix,
        idio_cov: ThresholdedCovariance,
    ) -> Result<Self> {
        if loadings.nrows() != idio_cov.dim() {
            return Err(FactorCovError::shape(
                "FactorCovEstimate",
                format!("{} loading rows", idio_cov.dim()),
                loadings.nrows(),
            ));
        }
        if loadings.ncols() != factor_cov.dim() {
            return Err(FactorCovError::shape(
                "FactorCovEstimate",
                format!("{} loading columns", factor_cov.dim()),
                loadings.ncols(),
            ));
        }
        Ok(FactorCovEstimate {
            loadings,
            factor_cov,
            idio_cov,
        })
    }

    pub fn from_fit(fit: &FactorFit, idio_cov: ThresholdedCovariance) -> Result<Self> {
        Self::new(fit.loadings.clone(), fit.factor_cov.clone(), idio_cov)
    }

    pub fn dim(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn factor_cov(&self) -> &SymMatrix {
        &self.factor_cov
    }

    pub fn idio_cov(&self) -> &ThresholdedCovariance {
        &self.idio_cov
    }
}

/// `B̂ ĉov(f) B̂′ + Σ̂_u^T` as a dense matrix.
pub fn assemble_sigma(est: &FactorCovEstimate) -> SymMatrix {
    let b = &est.loadings;
    let low_rank = b * est.factor_cov.as_matrix() * b.transpose();
    let mut full = SymMatrix::symmetrize(low_rank).expect("square by construction");
    full = full
        .add(&est.idio_cov.matrix)
        .expect("dimensions checked in constructor");
    full
}

/// `S^{-1} − S^{-1}B̂ [ĉov(f)^{-1} + B̂′S^{-1}B̂]^{-1} B̂′S^{-1}` with `S = Σ̂_u^T`.
pub fn woodbury_precision(est: &FactorCovEstimate) -> Result<SymMatrix> {
    let idio_inv = invert_spd(&est.idio_cov.matrix).map_err(|e| match e {
        FactorCovError::NotPositiveDefinite { min_eigenvalue, .. } => FactorCovError::NotPositiveDefinite {
            context: format!(
                "thresholded residual covariance (omega = {}); a larger threshold constant may restore definiteness",
                est.idio_cov.omega
            ),
            min_eigenvalue,
        },
        other => other,
    })?;
    let factor_inv = invert_spd(&est.factor_cov).map_err(|e| match e {
        FactorCovError::NotPositiveDefinite { min_eigenvalue, .. } => {
            FactorCovError::Domain(format!(
                "factor covariance is not positive definite (min eigenvalue {min_eigenvalue:e})"
            ))
        }
        other => other,
    })?;

    let b = &est.loadings;
    let sb = idio_inv.as_matrix() * b; // p × K
    let inner = SymMatrix::symmetrize(factor_inv.as_matrix() + b.transpose() * &sb)?;
    let inner_inv = invert_spd(&inner)?;
    let correction = &sb * inner_inv.as_matrix() * sb.transpose();
    SymMatrix::symmetrize(idio_inv.into_inner() - correction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub sigma_norm_err: f64,
    pub max_norm_err: f64,
    pub operator_norm_inv_err: Option<f64>,
    pub frobenius_err: f64,
}

pub fn error_report(
    estimate: &SymMatrix,
    estimate_inv: Option<&SymMatrix>,
    truth: &SymMatrix,
) -> Result<ErrorReport> {
    let normalizer = SigmaNormalizer::new(truth)?;
    error_report_with(estimate, estimate_inv, truth, &normalizer)
}

/// Same as [`error_report`] but reuses a normalizer built from `truth`.
pub fn error_report_with(
    estimate: &SymMatrix,
    estimate_inv: Option<&SymMatrix>,
    truth: &SymMatrix,
    normalizer: &SigmaNormalizer,
) -> Result<ErrorReport> {
    if estimate.dim() != truth.dim() {
        return Err(FactorCovError::shape(
            "error_report",
            truth.dim(),
            estimate.dim(),
        ));
    }
    let diff = estimate.sub(truth)?;
    let operator_norm_inv_err = match estimate_inv {
        Some(inv) => {
            let truth_inv = normalizer.reference_inverse();
            Some(operator_norm(inv.sub(&truth_inv)?.as_matrix())?)
        }
        None => None,
    };
    Ok(ErrorReport {
        sigma_norm_err: normalizer.norm(&diff)?,
        max_norm_err: max_norm(&diff),
        operator_norm_inv_err,
        frobenius_err: frobenius_norm(&diff),
    })
}

/// Worst-case portfolio variance error `‖Σ̂ − Σ‖_Max · ‖w‖₁²`.
pub fn portfolio_variance_bound(weights: &DVector<f64>, max_norm_err: f64) -> f64 {
    let gross: f64 = weights.iter().map(|w| w.abs()).sum();
    max_norm_err * gross * gross
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::min_eigenvalue;

    fn identity_idio(p: usize) -> ThresholdedCovariance {
        ThresholdedCovariance::unthresholded(SymMatrix::identity(p))
    }

    fn single_factor_example() -> FactorCovEstimate {
        FactorCovEstimate::new(
            DMatrix::from_element(2, 1, 1.0),
            SymMatrix::identity(1),
            identity_idio(2),
        )
        .unwrap()
    }

    #[test]
    fn assemble_examples() {
        let est = single_factor_example();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_eq!(assemble_sigma(&est).into_inner(), expected);

        let idio = ThresholdedCovariance::unthresholded(
            SymMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0]).unwrap(),
        );
        let zero_b =
            FactorCovEstimate::new(DMatrix::zeros(2, 2), SymMatrix::identity(2), idio.clone())
                .unwrap();
        assert_eq!(assemble_sigma(&zero_b), idio.matrix);
        let zero_f = FactorCovEstimate::new(
            DMatrix::from_element(2, 1, 3.0),
            SymMatrix::zeros(1),
            idio.clone(),
        )
        .unwrap();
        assert_eq!(assemble_sigma(&zero_f), idio.matrix);
    }

    #[test]
    fn woodbury_examples() {
        let est = single_factor_example();
        let prec = woodbury_precision(&est).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]) / 3.0;
        assert!(max_norm(&(prec.into_inner() - expected)) < 1e-14);

        let idio = ThresholdedCovariance::unthresholded(SymMatrix::from_diagonal(&[2.0, 4.0, 5.0]));
        let est =
            FactorCovEstimate::new(DMatrix::zeros(3, 2), SymMatrix::identity(2), idio.clone())
                .unwrap();
        let prec = woodbury_precision(&est).unwrap();
        assert_eq!(prec, invert_spd(&idio.matrix).unwrap());
    }

    #[test]
    fn woodbury_reports_non_pd_parts() {
        let bad_idio = ThresholdedCovariance::unthresholded(
            SymMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, 1.0]).unwrap(),
        );
        let est =
            FactorCovEstimate::new(DMatrix::zeros(2, 1), SymMatrix::identity(1), bad_idio).unwrap();
        let err = woodbury_precision(&est).unwrap_err();
        assert!(matches!(err, FactorCovError::NotPositiveDefinite { .. }));
        assert!(err.to_string().contains("larger threshold"));

        let est =
            FactorCovEstimate::new(DMatrix::zeros(2, 1), SymMatrix::zeros(1), identity_idio(2))
                .unwrap();
        assert!(matches!(
            woodbury_precision(&est),
            Err(FactorCovError::Domain(_))
        ));
    }

    #[test]
    fn constructor_checks_dimensions() {
        assert!(FactorCovEstimate::new(
            DMatrix::zeros(3, 1),
            SymMatrix::identity(1),
            identity_idio(2)
        )
        .is_err());
        assert!(FactorCovEstimate::new(
            DMatrix::zeros(2, 2),
            SymMatrix::identity(1),
            identity_idio(2)
        )
        .is_err());
    }

    #[test]
    fn assembly_does_not_lower_min_eigenvalue() {
        let b = DMatrix::from_fn(6, 2, |i, k| ((i + 3 * k) as f64).cos());
        let idio = SymMatrix::from_diagonal(&[0.5, 1.0, 0.7, 2.0, 0.9, 1.1]);
        let est = FactorCovEstimate::new(
            b,
            SymMatrix::from_row_slice(2, &[1.0, 0.2, 0.2, 0.5]).unwrap(),
            ThresholdedCovariance::unthresholded(idio.clone()),
        )
        .unwrap();
        let full = assemble_sigma(&est);
        assert!(min_eigenvalue(&full).unwrap() >= min_eigenvalue(&idio).unwrap() - 1e-10);
    }

    #[test]
    fn error_report_examples() {
        let truth = SymMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let truth_inv = invert_spd(&truth).unwrap();
        let r = error_report(&truth, Some(&truth_inv), &truth).unwrap();
        assert_eq!(r.max_norm_err, 0.0);
        assert_eq!(r.frobenius_err, 0.0);
        assert_eq!(r.sigma_norm_err, 0.0);
        assert!(r.operator_norm_inv_err.unwrap() < 1e-14);

        let eps = 0.03;
        let bumped = truth.add(&SymMatrix::identity(2).scale(eps)).unwrap();
        let r = error_report(&bumped, None, &truth).unwrap();
        assert!((r.max_norm_err - eps).abs() < 1e-15);
        assert!(r.operator_norm_inv_err.is_none());

        let not_pd = SymMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(
            error_report(&truth, None, &not_pd),
            Err(FactorCovError::Domain(_))
        ));
    }

    #[test]
    fn portfolio_bound_examples() {
        let e1 = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        assert!((portfolio_variance_bound(&e1, 0.05) - 0.05).abs() < 1e-15);
        let half = DVector::from_column_slice(&[0.5, 0.5]);
        assert!((portfolio_variance_bound(&half, 0.1) - 0.1).abs() < 1e-15);
        let long_short = DVector::from_column_slice(&[1.0, -1.0]);
        assert!((portfolio_variance_bound(&long_short, 0.1) - 0.4).abs() < 1e-15);
    }
}
