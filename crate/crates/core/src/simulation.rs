//! Calibrated data-generating process for the Monte Carlo study: trivariate
//! normal loadings, a stationary VAR(1) for the factors, and a sparse
//! idiosyncratic covariance with gamma-distributed standard deviations.
//!
//! Randomness comes from ChaCha8 streams. A stream is identified by
//! `(master_seed, stream_id)`, so replications can run in any order or in
//! parallel and still draw exactly the same numbers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::config::{format_list, parse_list, KvSource};
use crate::error::{FactorCovError, Result};
use crate::factor::Panel;
use crate::norms::{sparsity_degree, SymMatrix};

pub type SimRng = ChaCha8Rng;

const STREAM_ERROR_COV: u64 = 1;
const STREAM_REPLICATION: u64 = 2;

/// Independent generator for stream `stream` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Stream for the idiosyncratic covariance of dimension `p`.
pub fn error_cov_stream(p: usize) -> u64 {
    (STREAM_ERROR_COV << 56) | p as u64
}

/// Stream for replication `rep` at dimension `p`.
pub fn replication_stream(p: usize, rep: usize) -> u64 {
    debug_assert!(p < (1 << 28) && rep < (1 << 28));
    (STREAM_REPLICATION << 56) | ((p as u64) << 28) | rep as u64
}

/// Every constant of the data-generating process. `Default` carries the
/// values fitted to two years of daily Fama–French three-factor data.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    pub mu_b: DVector<f64>,
    pub sigma_b: DMatrix<f64>,
    pub mu_f: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub cov_f: DMatrix<f64>,
    pub gamma_shape: f64,
    pub gamma_scale: f64,
    pub sd_lower: f64,
    pub sd_upper: f64,
    pub sparsity_numerator: f64,
    pub threshold_c: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            mu_b: DVector::from_column_slice(&[1.0641, 0.1233, -0.0119]),
            sigma_b: DMatrix::from_row_slice(
                3,
                3,
                &[
                    0.0475, 0.0218, 0.0488, 0.0218, 0.0945, 0.0215, 0.0488, 0.0215, 0.1261,
                ],
            ),
            mu_f: DVector::from_column_slice(&[0.1074, 0.0357, 0.0033]),
            phi: DMatrix::from_row_slice(
                3,
                3,
                &[
                    -0.1149, 0.0024, 0.0776, 0.0016, -0.0162, 0.0387, -0.0399, 0.0218, 0.0351,
                ],
            ),
            cov_f: DMatrix::from_row_slice(
                3,
                3,
                &[
                    2.2540, 0.2735, 0.9197, 0.2735, 0.3767, 0.0430, 0.9197, 0.0430, 0.6822,
                ],
            ),
            gamma_shape: 5.6840,
            gamma_scale: 0.1503,
            sd_lower: 0.3533,
            sd_upper: 1.5222,
            sparsity_numerator: 0.2,
            threshold_c: 0.10,
        }
    }
}

impl CalibrationParams {
    /// Number of factors.
    pub fn k(&self) -> usize {
        self.mu_b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let square = |m: &DMatrix<f64>| m.shape() == (k, k);
        if k == 0
            || self.mu_f.len() != k
            || !square(&self.sigma_b)
            || !square(&self.phi)
            || !square(&self.cov_f)
        {
            return Err(FactorCovError::Calibration(format!(
                "parameter dimensions disagree with K = {k}"
            )));
        }
        for (name, m) in [("sigma_b", &self.sigma_b), ("cov_f", &self.cov_f)] {
            let s = SymMatrix::new(m.clone())
                .map_err(|_| FactorCovError::Calibration(format!("{name} is not symmetric")))?;
            let min = s.eigenvalues()?[0];
            if !(min > 0.0) {
                return Err(FactorCovError::Calibration(format!(
                    "{name} is not positive definite (min eigenvalue {min:e})"
                )));
            }
        }
        let rho = spectral_radius(&self.phi);
        if !(rho < 1.0) {
            return Err(FactorCovError::Calibration(format!(
                "VAR coefficient has spectral radius {rho} >= 1"
            )));
        }
        if !(self.gamma_shape > 0.0 && self.gamma_scale > 0.0) {
            return Err(FactorCovError::Calibration(
                "gamma parameters must be positive".into(),
            ));
        }
        if !(0.0 < self.sd_lower && self.sd_lower < self.sd_upper) {
            return Err(FactorCovError::Calibration(format!(
                "need 0 < sd_lower < sd_upper, got {} and {}",
                self.sd_lower, self.sd_upper
            )));
        }
        if !(self.sparsity_numerator >= 0.0) || !(self.threshold_c > 0.0) {
            return Err(FactorCovError::Calibration(
                "sparsity_numerator must be nonnegative and threshold_c positive".into(),
            ));
        }
        Ok(())
    }

    /// Applies one `key = value` pair; returns `false` for keys it does not own.
    pub fn apply(&mut self, key: &str, value: &str, src: &KvSource) -> Result<bool> {
        let k = self.k();
        match key {
            "mu_b" => self.mu_b = DVector::from_vec(parse_list(value, k, src)?),
            "sigma_b" => {
                self.sigma_b = DMatrix::from_row_slice(k, k, &parse_list(value, k * k, src)?)
            }
            "mu_f" => self.mu_f = DVector::from_vec(parse_list(value, k, src)?),
            "phi" => self.phi = DMatrix::from_row_slice(k, k, &parse_list(value, k * k, src)?),
            "cov_f" => self.cov_f = DMatrix::from_row_slice(k, k, &parse_list(value, k * k, src)?),
            "gamma_shape" => self.gamma_shape = src.parse(value)?,
            "gamma_scale" => self.gamma_scale = src.parse(value)?,
            "sd_lower" => self.sd_lower = src.parse(value)?,
            "sd_upper" => self.sd_upper = src.parse(value)?,
            "sparsity_numerator" => self.sparsity_numerator = src.parse(value)?,
            "threshold_c" => self.threshold_c = src.parse(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Key-value pairs in the configuration file format; matrices row-major.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> { m.transpose().iter().copied().collect() };
        vec![
            ("mu_b".into(), format_list(self.mu_b.as_slice())),
            ("sigma_b".into(), format_list(&row_major(&self.sigma_b))),
            ("mu_f".into(), format_list(self.mu_f.as_slice())),
            ("phi".into(), format_list(&row_major(&self.phi))),
            ("cov_f".into(), format_list(&row_major(&self.cov_f))),
            ("gamma_shape".into(), self.gamma_shape.to_string()),
            ("gamma_scale".into(), self.gamma_scale.to_string()),
            ("sd_lower".into(), self.sd_lower.to_string()),
            ("sd_upper".into(), self.sd_upper.to_string()),
            (
                "sparsity_numerator".into(),
                self.sparsity_numerator.to_string(),
            ),
            ("threshold_c".into(), self.threshold_c.to_string()),
        ]
    }

    /// Probability that a given `s_i` is nonzero.
    pub fn sparsity_probability(&self, p: usize) -> f64 {
        let p = p as f64;
        (self.sparsity_numerator / (p.sqrt() * p.ln())).min(1.0)
    }
}

/// Largest eigenvalue modulus of a (not necessarily symmetric) square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub loadings: DMatrix<f64>,
    pub sigma_u: SymMatrix,
    /// `B cov(f) B′ + Σ_u`.
    pub sigma_full: SymMatrix,
    pub m_t: usize,
}

impl GroundTruth {
    pub fn new(loadings: DMatrix<f64>, sigma_u: SymMatrix, cov_f: &DMatrix<f64>) -> Result<Self> {
        if loadings.nrows() != sigma_u.dim() || loadings.ncols() != cov_f.nrows() {
            return Err(FactorCovError::shape(
                "GroundTruth::new",
                format!("{}x{} loadings", sigma_u.dim(), cov_f.nrows()),
                format!("{}x{}", loadings.nrows(), loadings.ncols()),
            ));
        }
        let low_rank = SymMatrix::symmetrize(&loadings * cov_f * loadings.transpose())?;
        let sigma_full = low_rank.add(&sigma_u)?;
        let m_t = sparsity_degree(&sigma_u, 0.0);
        Ok(GroundTruth {
            loadings,
            sigma_u,
            sigma_full,
            m_t,
        })
    }
}

/// Draws from `N(mean, cov)` through the symmetric square root of `cov`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mean: DVector<f64>, cov: &SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(FactorCovError::shape(
                "GaussianSampler",
                cov.dim(),
                mean.len(),
            ));
        }
        let root = if cov.iter().all(|&x| x == 0.0) {
            DMatrix::zeros(cov.dim(), cov.dim())
        } else {
            cov.eigen()?.sqrt_psd().into_inner()
        };
        Ok(GaussianSampler { mean, root })
    }

    pub fn centered(cov: &SymMatrix) -> Result<Self> {
        Self::new(DVector::zeros(cov.dim()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `n` draws as the columns of a `dim × n` matrix.
    pub fn sample_columns<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> DMatrix<f64> {
        let d = self.dim();
        let z = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut out = &self.root * z;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_columns(rng, 1).column(0).into_owned()
    }
}

/// `p` independent loading rows drawn from `N(μ_B, Σ_B)`, returned as `p × K`.
pub fn draw_loadings<R: Rng + ?Sized>(
    params: &CalibrationParams,
    p: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let cov = SymMatrix::symmetrize(params.sigma_b.clone())?;
    let sampler = GaussianSampler::new(params.mu_b.clone(), &cov)?;
    Ok(sampler.sample_columns(rng, p).transpose())
}

/// `Σ_u = D + s s′ − diag(s_i²)`, redrawn (both `D` and `s`) until positive
/// definite. `D = diag(σ_i²)` with `σ_i` gamma-distributed and accepted only
/// inside `[sd_lower, sd_upper]`; each `s_i` is standard normal with
/// probability `sparsity_numerator / (√p ln p)` and zero otherwise.
pub fn generate_sparse_error_cov<R: Rng + ?Sized>(
    params: &CalibrationParams,
    p: usize,
    rng: &mut R,
    max_attempts: usize,
) -> Result<SymMatrix> {
    if p < 2 {
        return Err(FactorCovError::Domain(format!(
            "sparse error covariance needs p >= 2, got {p}"
        )));
    }
    if max_attempts == 0 {
        return Err(FactorCovError::Precondition(
            "max_attempts must be at least 1".into(),
        ));
    }
    let gamma = Gamma::new(params.gamma_shape, params.gamma_scale)
        .map_err(|e| FactorCovError::Calibration(format!("gamma distribution: {e}")))?;
    let prob = params.sparsity_probability(p);

    for _ in 0..max_attempts {
        let mut sd = Vec::with_capacity(p);
        let mut rejected = 0usize;
        while sd.len() < p {
            let x: f64 = gamma.sample(rng);
            if (params.sd_lower..=params.sd_upper).contains(&x) {
                sd.push(x);
            } else {
                rejected += 1;
                if rejected > 1_000_000 + 1000 * p {
                    return Err(FactorCovError::Calibration(
                        "truncated gamma draw almost never lands inside [sd_lower, sd_upper]"
                            .into(),
                    ));
                }
            }
        }
        let s: Vec<f64> = (0..p)
            .map(|_| {
                if rng.random::<f64>() < prob {
                    rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
            .collect();

        let m = DMatrix::from_fn(
            p,
            p,
            |i, j| if i == j { sd[i] * sd[i] } else { s[i] * s[j] },
        );
        let candidate = SymMatrix::new(m)?;
        if candidate
            .eigen()?
            .require_positive_definite("sparse error covariance")
            .is_ok()
        {
            return Ok(candidate);
        }
    }
    Err(FactorCovError::GenerationFailure {
        attempts: max_attempts,
    })
}

/// `f_t = μ + Φ f_{t−1} + ε_t` with `ε_t ~ N(0, Σ_ε)` and
/// `Σ_ε = cov(f) − Φ cov(f) Φ′`, so `cov(f)` is the stationary covariance.
#[derive(Debug, Clone)]
pub struct Var1Process {
    intercept: DVector<f64>,
    phi: DMatrix<f64>,
    innovation: GaussianSampler,
    stationary_mean: DVector<f64>,
}

impl Var1Process {
    pub fn new(params: &CalibrationParams) -> Result<Self> {
        let rho = spectral_radius(&params.phi);
        if !(rho < 1.0) {
            return Err(FactorCovError::Calibration(format!(
                "VAR coefficient has spectral radius {rho} >= 1"
            )));
        }
        let innovation_cov = innovation_covariance(params)?;
        let k = params.k();
        let stationary_mean = (DMatrix::identity(k, k) - &params.phi)
            .lu()
            .solve(&params.mu_f)
            .ok_or_else(|| FactorCovError::Calibration("I - phi is singular".into()))?;
        Ok(Var1Process {
            intercept: params.mu_f.clone(),
            phi: params.phi.clone(),
            innovation: GaussianSampler::centered(&innovation_cov)?,
            stationary_mean,
        })
    }

    pub fn stationary_mean(&self) -> &DVector<f64> {
        &self.stationary_mean
    }

    /// Starts at the stationary mean, discards `burn_in` steps, records `t`.
    pub fn simulate<R: Rng + ?Sized>(&self, t: usize, burn_in: usize, rng: &mut R) -> DMatrix<f64> {
        let k = self.intercept.len();
        let shocks = self.innovation.sample_columns(rng, t + burn_in);
        let mut state = self.stationary_mean.clone();
        let mut out = DMatrix::zeros(k, t);
        for step in 0..(t + burn_in) {
            state = &self.intercept + &self.phi * &state + shocks.column(step);
            if step >= burn_in {
                out.set_column(step - burn_in, &state);
            }
        }
        out
    }
}

/// `cov(f) − Φ cov(f) Φ′`, failing when it is not positive semidefinite.
pub fn innovation_covariance(params: &CalibrationParams) -> Result<SymMatrix> {
    let cov_f = &params.cov_f;
    let m = SymMatrix::symmetrize(cov_f - &params.phi * cov_f * params.phi.transpose())?;
    let values = m.eigenvalues()?;
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if values[0] < -1e-12 * scale.max(1.0) {
        return Err(FactorCovError::Calibration(format!(
            "implied innovation covariance is not PSD (min eigenvalue {:e})",
            values[0]
        )));
    }
    Ok(m)
}

pub fn simulate_var1<R: Rng + ?Sized>(
    params: &CalibrationParams,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if t == 0 {
        return Err(FactorCovError::Precondition(
            "VAR simulation needs t >= 1".into(),
        ));
    }
    Ok(Var1Process::new(params)?.simulate(t, burn_in, rng))
}

/// `y_t = B f_t + u_t` with `u_t ~ N(0, Σ_u)` i.i.d.
pub fn generate_panel<R: Rng + ?Sized>(
    truth: &GroundTruth,
    factors: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Panel> {
    let sampler = GaussianSampler::centered(&truth.sigma_u)?;
    generate_panel_with(truth, &sampler, factors, rng)
}

/// As [`generate_panel`], with the error sampler built once by the caller.
pub fn generate_panel_with<R: Rng + ?Sized>(
    truth: &GroundTruth,
    errors: &GaussianSampler,
    factors: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Panel> {
    if factors.nrows() != truth.loadings.ncols() || errors.dim() != truth.loadings.nrows() {
        return Err(FactorCovError::shape(
            "generate_panel",
            format!("{} factor rows", truth.loadings.ncols()),
            factors.nrows(),
        ));
    }
    let u = errors.sample_columns(rng, factors.ncols());
    Panel::new(&truth.loadings * factors + u, factors.clone())
}
