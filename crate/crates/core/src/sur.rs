//! Seemingly unrelated regressions: `p` equations `y_i = x_i b_i + u_i`, each
//! with its own regressors, coupled only through the cross-equation error
//! covariance.
//!
//! The stacked system groups observations by equation, `y = (y_1′, …, y_p′)′`,
//! so the GLS weight is `W ⊗ I_T` and block `(i, j)` of `X′(W ⊗ I_T)X` is
//! `w_ij x_i′x_j`. Nothing of size `pT × pT` is ever formed.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{FactorCovError, Result};
use crate::factor::invert_gram;
use crate::norms::SymMatrix;
use crate::threshold::{
    adaptive_threshold, invert_spd, residual_moments, threshold_level, ThresholdedCovariance,
};

#[derive(Debug, Clone)]
pub struct SurEquation {
    /// Response, length `T`.
    pub y: DVector<f64>,
    /// Regressors, `T × K_i`.
    pub x: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SurModel {
    equations: Vec<SurEquation>,
    t: usize,
}

impl SurModel {
    pub fn new(equations: Vec<SurEquation>) -> Result<Self> {
        let Some(first) = equations.first() else {
            return Err(FactorCovError::Precondition(
                "SUR model needs at least one equation".into(),
            ));
        };
        let t = first.y.len();
        for (i, eq) in equations.iter().enumerate() {
            if eq.y.len() != t || eq.x.nrows() != t {
                return Err(FactorCovError::shape(
                    "SurModel::new",
                    format!("{t} periods in equation {i}"),
                    format!("y: {}, x: {}", eq.y.len(), eq.x.nrows()),
                ));
            }
            if eq.x.ncols() == 0 {
                return Err(FactorCovError::Precondition(format!(
                    "equation {i} has no regressors"
                )));
            }
            if t <= eq.x.ncols() {
                return Err(FactorCovError::InsufficientData {
                    needed: eq.x.ncols() + 1,
                    got: t,
                });
            }
            if eq.y.iter().chain(eq.x.iter()).any(|v| !v.is_finite()) {
                return Err(FactorCovError::Domain(format!(
                    "equation {i} contains non-finite data"
                )));
            }
        }
        Ok(SurModel { equations, t })
    }

    pub fn equations(&self) -> &[SurEquation] {
        &self.equations
    }

    pub fn p(&self) -> usize {
        self.equations.len()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn k_max(&self) -> usize {
        self.equations
            .iter()
            .map(|e| e.x.ncols())
            .max()
            .unwrap_or(0)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.equations.iter().map(|e| e.x.ncols()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlsMethod {
    Ols,
    FeasibleGls,
}

/// Which matrix weights the stacked least-squares problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlsWeighting {
    /// `precision ⊗ I_T`, the usual GLS weight.
    #[default]
    Precision,
    /// `(precision ⊗ I_T)^{-1}`, i.e. weighting by the covariance itself. Kept
    /// only so the two readings can be compared.
    LiteralInverse,
}

#[derive(Debug, Clone)]
pub struct GlsFit {
    /// All coefficient blocks concatenated in equation order.
    pub coefficients: DVector<f64>,
    pub block_sizes: Vec<usize>,
    /// `p × T` residuals of the fitted equations.
    pub residuals: DMatrix<f64>,
    pub residual_cov: ThresholdedCovariance,
    pub method: GlsMethod,
    k_max: usize,
}

impl GlsFit {
    fn new(model: &SurModel, coefficients: DVector<f64>, method: GlsMethod) -> Result<Self> {
        let block_sizes = model.block_sizes();
        let mut residuals = DMatrix::zeros(model.p(), model.t());
        let mut offset = 0;
        for (i, eq) in model.equations().iter().enumerate() {
            let k = eq.x.ncols();
            let b = coefficients.rows(offset, k);
            let r = &eq.y - &eq.x * b;
            residuals.row_mut(i).copy_from(&r.transpose());
            offset += k;
        }
        let moments = residual_moments(&residuals)?;
        Ok(GlsFit {
            coefficients,
            block_sizes,
            residuals,
            residual_cov: ThresholdedCovariance::unthresholded(moments.sigma_hat),
            method,
            k_max: model.k_max(),
        })
    }

    /// Coefficients of equation `i`.
    pub fn block(&self, i: usize) -> DVector<f64> {
        let offset: usize = self.block_sizes[..i].iter().sum();
        self.coefficients
            .rows(offset, self.block_sizes[i])
            .into_owned()
    }
}

/// Equation-by-equation OLS; the residual covariance is left unthresholded.
pub fn sur_ols(model: &SurModel) -> Result<GlsFit> {
    let mut coefficients = Vec::with_capacity(model.block_sizes().iter().sum());
    for (i, eq) in model.equations().iter().enumerate() {
        let gram_inv = invert_gram(
            eq.x.transpose() * &eq.x,
            format!("regressor Gram matrix of equation {i}"),
        )?;
        let b = gram_inv * (eq.x.transpose() * &eq.y);
        coefficients.extend(b.iter().copied());
    }
    GlsFit::new(model, DVector::from_vec(coefficients), GlsMethod::Ols)
}

/// Thresholds the fit's residual covariance at `ω = c · K_max · √(ln p / T)`.
pub fn sur_threshold(fit: &GlsFit, c: f64) -> Result<ThresholdedCovariance> {
    let (p, t) = fit.residuals.shape();
    let omega = threshold_level(c, fit.k_max, p, t)?;
    let moments = residual_moments(&fit.residuals)?;
    Ok(adaptive_threshold(&moments, omega))
}

pub fn feasible_gls(model: &SurModel, precision: &SymMatrix) -> Result<GlsFit> {
    feasible_gls_weighted(model, precision, GlsWeighting::Precision)
}

pub fn feasible_gls_weighted(
    model: &SurModel,
    precision: &SymMatrix,
    weighting: GlsWeighting,
) -> Result<GlsFit> {
    let p = model.p();
    if precision.dim() != p {
        return Err(FactorCovError::shape(
            "feasible_gls",
            format!("{p}x{p} precision"),
            precision.dim(),
        ));
    }
    let pd_check = invert_spd(precision).map_err(|e| match e {
        FactorCovError::NotPositiveDefinite { min_eigenvalue, .. } => FactorCovError::Domain(
            format!("GLS precision is not positive definite (min eigenvalue {min_eigenvalue:e})"),
        ),
        other => other,
    })?;
    let weight = match weighting {
        GlsWeighting::Precision => precision.clone(),
        GlsWeighting::LiteralInverse => pd_check,
    };

    let sizes = model.block_sizes();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let eqs = model.equations();

    let mut normal = DMatrix::zeros(total, total);
    let mut rhs = DVector::zeros(total);
    for i in 0..p {
        let xi_t = eqs[i].x.transpose();
        for j in 0..p {
            let w = weight[(i, j)];
            if w == 0.0 {
                continue;
            }
            if j >= i {
                let block = &xi_t * &eqs[j].x * w;
                normal
                    .view_mut((offsets[i], offsets[j]), (sizes[i], sizes[j]))
                    .copy_from(&block);
                if j > i {
                    normal
                        .view_mut((offsets[j], offsets[i]), (sizes[j], sizes[i]))
                        .copy_from(&block.transpose());
                }
            }
            let contrib = &xi_t * &eqs[j].y * w;
            let mut seg = rhs.rows_mut(offsets[i], sizes[i]);
            seg += contrib;
        }
    }

    let chol = Cholesky::new(normal.clone()).ok_or_else(|| {
        let min_eigenvalue = SymMatrix::symmetrize(normal)
            .and_then(|m| m.eigenvalues())
            .map(|v| v[0])
            .unwrap_or(f64::NAN);
        FactorCovError::RankDeficient {
            what: "GLS normal matrix X'WX".into(),
            dimension: total,
            min_eigenvalue,
        }
    })?;
    let coefficients = chol.solve(&rhs);
    GlsFit::new(model, coefficients, GlsMethod::FeasibleGls)
}
