//! Dense symmetric-matrix utilities: the four matrix norms used to score
//! covariance estimates, eigenvalue queries, and the sparsity degree of a
//! covariance matrix.
//!
//! Everything here works on dense `nalgebra` storage. [`SymMatrix`] is a thin
//! newtype that guarantees exact symmetry, so eigenvalue routines can assume
//! it without re-checking.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FactorCovError, Result};

/// Eigenvalues below `RELATIVE_EIGEN_CUTOFF * λ_max` are treated as zero when a
/// matrix has to be inverted or inverse-square-rooted.
pub const RELATIVE_EIGEN_CUTOFF: f64 = 1e-12;

/// A dense, exactly symmetric `p × p` matrix with `p ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m`, failing unless it is square, non-empty and exactly symmetric.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square("SymMatrix::new", &m)?;
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                if m[(i, j)] != m[(j, i)] && !(m[(i, j)].is_nan() && m[(j, i)].is_nan()) {
                    return Err(FactorCovError::Domain(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(SymMatrix(m))
    }

    /// Builds `(m + m′) / 2`. The average is computed once per pair and mirrored,
    /// so the result is symmetric bit for bit.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        check_square("SymMatrix::symmetrize", &m)?;
        let mut m = m;
        mirror_average(&mut m);
        Ok(SymMatrix(m))
    }

    /// Mirrors the lower triangle onto the upper one.
    pub(crate) fn from_lower(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                m[(j, i)] = m[(i, j)];
            }
        }
        SymMatrix(m)
    }

    pub fn from_row_slice(p: usize, data: &[f64]) -> Result<Self> {
        if p == 0 || data.len() != p * p {
            return Err(FactorCovError::shape(
                "SymMatrix::from_row_slice",
                format!("{} entries", p * p),
                data.len(),
            ));
        }
        SymMatrix::new(DMatrix::from_row_slice(p, p, data))
    }

    pub fn identity(p: usize) -> Self {
        assert!(p >= 1, "SymMatrix dimension must be positive");
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        assert!(p >= 1, "SymMatrix dimension must be positive");
        SymMatrix(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "SymMatrix dimension must be positive");
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Sets entries `(i, j)` and `(j, i)` together.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.0[(i, j)] = value;
        self.0[(j, i)] = value;
    }

    /// The diagonal part as its own matrix.
    pub fn diagonal_part(&self) -> SymMatrix {
        SymMatrix(DMatrix::from_diagonal(&self.0.diagonal()))
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix(&self.0 * factor)
    }

    /// Entrywise sum; both operands symmetric, so the result is too.
    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        same_dim("SymMatrix::add", self, other)?;
        Ok(SymMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        same_dim("SymMatrix::sub", self, other)?;
        Ok(SymMatrix(&self.0 - &other.0))
    }

    pub fn eigen(&self) -> Result<SymEigen> {
        SymEigen::new(self)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<DVector<f64>> {
        check_finite("eigenvalues", &self.0)?;
        let mut values = self.0.clone().symmetric_eigenvalues();
        values
            .as_mut_slice()
            .sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(values)
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigendecomposition `A = Q Λ Q′` of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        check_finite("eigendecomposition", a)?;
        let p = a.dim();
        let max_iter = (200 * p).max(10_000);
        let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, max_iter)
            .ok_or_else(|| {
                FactorCovError::NumericalFailure(format!(
                    "symmetric eigensolver did not converge for a {p}x{p} matrix"
                ))
            })?;

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("finite eigenvalues")
        });
        let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
        let vectors = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(SymEigen { values, vectors })
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_radius(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// Fails unless every eigenvalue clears the relative cutoff.
    pub fn require_positive_definite(&self, context: &str) -> Result<()> {
        let max = self.max();
        if !(max > 0.0) || self.min() <= RELATIVE_EIGEN_CUTOFF * max {
            return Err(FactorCovError::NotPositiveDefinite {
                context: context.to_string(),
                min_eigenvalue: self.min(),
            });
        }
        Ok(())
    }

    /// `Q f(Λ) Q′`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        let mut m = scaled * self.vectors.transpose();
        mirror_average(&mut m);
        SymMatrix(m)
    }

    pub fn inverse(&self, context: &str) -> Result<SymMatrix> {
        self.require_positive_definite(context)?;
        Ok(self.reconstruct_with(|l| 1.0 / l))
    }

    pub fn inverse_sqrt(&self, context: &str) -> Result<SymMatrix> {
        self.require_positive_definite(context)?;
        Ok(self.reconstruct_with(|l| 1.0 / l.sqrt()))
    }

    /// Symmetric square root of a positive semidefinite matrix; slightly negative
    /// eigenvalues from rounding are clamped to zero.
    pub fn sqrt_psd(&self) -> SymMatrix {
        self.reconstruct_with(|l| l.max(0.0).sqrt())
    }
}

/// Frobenius, operator and max norms of one matrix, plus the entropy-loss norm
/// when a reference covariance is supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBundle {
    pub frobenius: f64,
    pub operator: f64,
    pub max_abs: f64,
    pub sigma: Option<f64>,
}

impl NormBundle {
    pub fn compute(a: &SymMatrix, reference: Option<&SymMatrix>) -> Result<Self> {
        Ok(NormBundle {
            frobenius: frobenius_norm(a),
            operator: operator_norm(a)?,
            max_abs: max_norm(a),
            sigma: reference.map(|s| sigma_norm(a, s)).transpose()?,
        })
    }
}

/// `tr(A′A)^{1/2}`.
pub fn frobenius_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value. Exactly symmetric input goes through its eigenvalues;
/// anything else through `λ_max(A′A)^{1/2}`.
pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    if a.is_square() && is_exactly_symmetric(a) {
        let values = SymMatrix(a.clone()).eigenvalues()?;
        return Ok(values[0].abs().max(values[values.len() - 1].abs()));
    }
    let gram = SymMatrix::symmetrize(a.transpose() * a)?;
    let values = gram.eigenvalues()?;
    Ok(values[values.len() - 1].max(0.0).sqrt())
}

/// `max_{i,j} |A_ij|`.
pub fn max_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Entropy-loss norm `p^{-1/2} ‖Σ^{-1/2} A Σ^{-1/2}‖_F`.
pub fn sigma_norm(a: &SymMatrix, sigma_true: &SymMatrix) -> Result<f64> {
    SigmaNormalizer::new(sigma_true)?.norm(a)
}

/// Caches `Σ^{-1/2}` (and `Σ^{-1}`) of a reference covariance so several
/// estimates can be scored against it with one eigendecomposition.
#[derive(Debug, Clone)]
pub struct SigmaNormalizer {
    inv_sqrt: SymMatrix,
    eigen: SymEigen,
}

impl SigmaNormalizer {
    pub fn new(sigma_true: &SymMatrix) -> Result<Self> {
        let eigen = sigma_true.eigen()?;
        let inv_sqrt = eigen.inverse_sqrt("reference covariance").map_err(|e| match e {
            FactorCovError::NotPositiveDefinite { min_eigenvalue, .. } => FactorCovError::Domain(
                format!("reference covariance is not positive definite (min eigenvalue {min_eigenvalue:e})"),
            ),
            other => other,
        })?;
        Ok(SigmaNormalizer { inv_sqrt, eigen })
    }

    pub fn dim(&self) -> usize {
        self.inv_sqrt.dim()
    }

    pub fn norm(&self, a: &SymMatrix) -> Result<f64> {
        if a.dim() != self.dim() {
            return Err(FactorCovError::shape("sigma_norm", self.dim(), a.dim()));
        }
        let whitened = &*self.inv_sqrt * a.as_matrix() * &*self.inv_sqrt;
        Ok(frobenius_norm(&whitened) / (self.dim() as f64).sqrt())
    }

    /// `Σ^{-1}` from the cached decomposition.
    pub fn reference_inverse(&self) -> SymMatrix {
        self.eigen.reconstruct_with(|l| 1.0 / l)
    }
}

pub fn min_eigenvalue(a: &SymMatrix) -> Result<f64> {
    Ok(a.eigenvalues()?[0])
}

pub fn is_positive_definite(a: &SymMatrix) -> Result<bool> {
    Ok(min_eigenvalue(a)? > 0.0)
}

/// `max_i #{j : |A_ij| > tol}`.
pub fn sparsity_degree(a: &SymMatrix, tol: f64) -> usize {
    let p = a.dim();
    (0..p)
        .map(|i| (0..p).filter(|&j| a[(i, j)].abs() > tol).count())
        .max()
        .unwrap_or(0)
}

pub(crate) fn is_exactly_symmetric(a: &DMatrix<f64>) -> bool {
    let p = a.nrows();
    (0..p).all(|j| ((j + 1)..p).all(|i| a[(i, j)] == a[(j, i)]))
}

pub(crate) fn mirror_average(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_square(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 0 || !m.is_square() {
        return Err(FactorCovError::shape(
            context,
            "non-empty square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_finite(context: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(FactorCovError::NumericalFailure(format!(
            "{context}: matrix has non-finite entries"
        )));
    }
    Ok(())
}

fn same_dim(context: &'static str, a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(FactorCovError::shape(context, a.dim(), b.dim()));
    }
    Ok(())
}
