//! OLS factor loadings, residuals, and the two plain covariance estimators
//! (factor sample covariance and the observation sample covariance).
//!
//! Conventions: the regression has no intercept, the factor covariance uses
//! divisor `T`, the observation sample covariance uses `T - 1`.

use nalgebra::DMatrix;

use crate::error::{FactorCovError, Result};
use crate::norms::SymMatrix;

/// Observations `y` (`p × T`, one series per row) and observable factors
/// `f` (`K × T`, one factor per row).
#[derive(Debug, Clone)]
pub struct Panel {
    y: DMatrix<f64>,
    f: DMatrix<f64>,
}

impl Panel {
    pub fn new(y: DMatrix<f64>, f: DMatrix<f64>) -> Result<Self> {
        if y.ncols() != f.ncols() {
            return Err(FactorCovError::shape(
                "Panel::new",
                format!("{} periods in F", y.ncols()),
                f.ncols(),
            ));
        }
        if y.nrows() == 0 || f.nrows() == 0 {
            return Err(FactorCovError::shape(
                "Panel::new",
                "at least one series and one factor",
                format!("p = {}, K = {}", y.nrows(), f.nrows()),
            ));
        }
        if f.ncols() <= f.nrows() {
            return Err(FactorCovError::InsufficientData {
                needed: f.nrows() + 1,
                got: f.ncols(),
            });
        }
        if y.iter().chain(f.iter()).any(|x| !x.is_finite()) {
            return Err(FactorCovError::Domain(
                "panel contains non-finite entries".into(),
            ));
        }
        Ok(Panel { y, f })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn p(&self) -> usize {
        self.y.nrows()
    }

    pub fn t(&self) -> usize {
        self.y.ncols()
    }

    pub fn k(&self) -> usize {
        self.f.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct FactorFit {
    /// `B̂`, `p × K`.
    pub loadings: DMatrix<f64>,
    /// `Û = Y − B̂F`, `p × T`.
    pub residuals: DMatrix<f64>,
    /// Factor sample covariance, divisor `T`.
    pub factor_cov: SymMatrix,
}

impl FactorFit {
    pub fn estimate(panel: &Panel) -> Result<Self> {
        let loadings = ols_loadings(panel)?;
        let residuals = residuals(panel, &loadings)?;
        let factor_cov = factor_sample_cov(panel.f())?;
        Ok(FactorFit {
            loadings,
            residuals,
            factor_cov,
        })
    }
}

/// Inverts a symmetric Gram matrix, reporting rank deficiency for `what`.
pub(crate) fn invert_gram(gram: DMatrix<f64>, what: impl Into<String>) -> Result<DMatrix<f64>> {
    let gram = SymMatrix::symmetrize(gram)?;
    let eigen = gram.eigen()?;
    eigen
        .inverse("gram")
        .map(SymMatrix::into_inner)
        .map_err(|_| FactorCovError::RankDeficient {
            what: what.into(),
            dimension: gram.dim(),
            min_eigenvalue: eigen.min(),
        })
}

/// Row `i` is `(FF′)^{-1} F y_i′`; every row shares one Gram inverse.
pub fn ols_loadings(panel: &Panel) -> Result<DMatrix<f64>> {
    let f = panel.f();
    let gram_inv = invert_gram(f * f.transpose(), "factor Gram matrix F F'")?;
    // B̂ = Y F′ (F F′)^{-1}
    Ok(panel.y() * f.transpose() * gram_inv)
}

/// `Û = Y − B̂F`.
pub fn residuals(panel: &Panel, loadings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if loadings.shape() != (panel.p(), panel.k()) {
        return Err(FactorCovError::shape(
            "residuals",
            format!("{}x{} loadings", panel.p(), panel.k()),
            format!("{}x{}", loadings.nrows(), loadings.ncols()),
        ));
    }
    Ok(panel.y() - loadings * panel.f())
}

/// Mean-centered covariance of the rows of `x` with divisor `divisor`.
fn centered_cov(x: &DMatrix<f64>, divisor: f64) -> SymMatrix {
    let t = x.ncols();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.sum() / t as f64;
        row.add_scalar_mut(-mean);
    }
    let cross = &centered * centered.transpose() / divisor;
    SymMatrix::from_lower(cross)
}

/// `T^{-1} X X′ − T^{-2} X 1 1′ X′`, i.e. the divisor-`T` covariance of the rows of `f`.
pub fn factor_sample_cov(f: &DMatrix<f64>) -> Result<SymMatrix> {
    let t = f.ncols();
    if t < 2 {
        return Err(FactorCovError::InsufficientData { needed: 2, got: t });
    }
    if f.nrows() == 0 {
        return Err(FactorCovError::shape("factor_sample_cov", "K >= 1", 0));
    }
    Ok(centered_cov(f, t as f64))
}

/// `(T − 1)^{-1} Σ_t (y_t − ȳ)(y_t − ȳ)′`.
pub fn sample_cov(y: &DMatrix<f64>) -> Result<SymMatrix> {
    let t = y.ncols();
    if t < 2 {
        return Err(FactorCovError::InsufficientData { needed: 2, got: t });
    }
    if y.nrows() == 0 {
        return Err(FactorCovError::shape("sample_cov", "p >= 1", 0));
    }
    Ok(centered_cov(y, (t - 1) as f64))
}
