//! Monte Carlo harness: for each dimension `p` in a grid, simulate panels from
//! the calibrated model, estimate the covariance both by thresholding and by
//! the plain sample covariance, and summarize the estimation errors.
//!
//! The idiosyncratic covariance `Σ_u` is drawn once per `p`; loadings,
//! factors and errors are redrawn in every replication. Each draw has its
//! own RNG stream keyed by `(seed, p)` or `(seed, p, rep)`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::assembly::{assemble_sigma, woodbury_precision, FactorCovEstimate};
use crate::config::{format_grid, parse_grid, read_kv_file, render_kv, KvEntry};
use crate::error::{FactorCovError, Result};
use crate::factor::{sample_cov, FactorFit};
use crate::io::format_f64;
use crate::norms::{max_norm, min_eigenvalue, operator_norm, SigmaNormalizer, SymMatrix};
use crate::simulation::{
    draw_loadings, error_cov_stream, generate_panel_with, generate_sparse_error_cov,
    replication_stream, stream_rng, CalibrationParams, GaussianSampler, GroundTruth, Var1Process,
};
use crate::threshold::{adaptive_threshold, invert_spd, residual_moments, threshold_level};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub t: usize,
    pub p_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub calib: CalibrationParams,
    /// Inverse errors are skipped for `p` above this.
    pub inverse_p_cap: usize,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub burn_in: usize,
    /// PD-acceptance attempts when drawing `Σ_u`.
    pub max_attempts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            t: 500,
            p_grid: (20..=600).step_by(20).collect(),
            reps: 200,
            seed: 20_111_201,
            calib: CalibrationParams::default(),
            inverse_p_cap: 300,
            threads: 0,
            output_dir: PathBuf::from("results"),
            burn_in: 500,
            max_attempts: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(FactorCovError::Precondition(
                "reps must be at least 1".into(),
            ));
        }
        if self.t < 2 {
            return Err(FactorCovError::Precondition("t must be at least 2".into()));
        }
        if self.p_grid.is_empty() || self.p_grid.iter().any(|&p| p < 2) {
            return Err(FactorCovError::Precondition(
                "p grid must be nonempty with every p >= 2".into(),
            ));
        }
        if self.t <= self.calib.k() {
            return Err(FactorCovError::Precondition(
                "t must exceed the number of factors".into(),
            ));
        }
        self.calib.validate()
    }

    pub fn apply_entries(&mut self, entries: &[KvEntry]) -> Result<()> {
        for e in entries {
            let src = &e.source;
            match e.key.as_str() {
                "t" => self.t = src.parse(&e.value)?,
                "p_grid" => self.p_grid = parse_grid(&e.value, src)?,
                "reps" => self.reps = src.parse(&e.value)?,
                "seed" => self.seed = src.parse(&e.value)?,
                "inverse_p_cap" => self.inverse_p_cap = src.parse(&e.value)?,
                "threads" => self.threads = src.parse(&e.value)?,
                "output_dir" => self.output_dir = PathBuf::from(&e.value),
                "burn_in" => self.burn_in = src.parse(&e.value)?,
                "max_attempts" => self.max_attempts = src.parse(&e.value)?,
                key => {
                    if !self.calib.apply(key, &e.value, src)? {
                        return Err(src.error(format!("unknown key {key:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        config.apply_entries(&read_kv_file(path)?)?;
        Ok(config)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("t".to_string(), self.t.to_string()),
            ("p_grid".to_string(), format_grid(&self.p_grid)),
            ("reps".to_string(), self.reps.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("inverse_p_cap".to_string(), self.inverse_p_cap.to_string()),
            ("threads".to_string(), self.threads.to_string()),
            (
                "output_dir".to_string(),
                self.output_dir.display().to_string(),
            ),
            ("burn_in".to_string(), self.burn_in.to_string()),
            ("max_attempts".to_string(), self.max_attempts.to_string()),
        ];
        pairs.extend(self.calib.to_pairs());
        pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    Thresholded,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    SigmaNorm,
    MaxNorm,
    InvOperatorNorm,
}

impl Estimator {
    pub const ALL: [Estimator; 2] = [Estimator::Thresholded, Estimator::Sample];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Thresholded => "thresholded",
            Estimator::Sample => "sample",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::SigmaNorm, Metric::MaxNorm, Metric::InvOperatorNorm];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SigmaNorm => "sigma_norm",
            Metric::MaxNorm => "max_norm",
            Metric::InvOperatorNorm => "inv_operator_norm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything measured in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub p: usize,
    pub rep: usize,
    /// Indexed `[estimator][metric]`; `None` when not computable or skipped.
    pub metrics: [[Option<f64>; 3]; 2],
    /// `stage:error_tag` for every stage that failed.
    pub failures: Vec<String>,
    pub omega: Option<f64>,
    pub idio_min_eigenvalue: Option<f64>,
    pub thresholded_min_eigenvalue: Option<f64>,
    pub sample_min_eigenvalue: Option<f64>,
    pub sample_operator_norm: Option<f64>,
}

impl ReplicationRecord {
    fn empty(p: usize, rep: usize) -> Self {
        ReplicationRecord {
            p,
            rep,
            metrics: [[None; 3]; 2],
            failures: Vec::new(),
            omega: None,
            idio_min_eigenvalue: None,
            thresholded_min_eigenvalue: None,
            sample_min_eigenvalue: None,
            sample_operator_norm: None,
        }
    }

    pub fn metric(&self, estimator: Estimator, metric: Metric) -> Option<f64> {
        self.metrics[estimator as usize][metric as usize]
    }

    fn set(&mut self, estimator: Estimator, metric: Metric, value: f64) {
        self.metrics[estimator as usize][metric as usize] = Some(value);
    }

    fn fail(&mut self, stage: &str, err: &FactorCovError) {
        self.failures.push(format!("{stage}:{}", err.tag()));
    }
}

/// Per-dimension state shared by all replications at that `p`.
#[derive(Debug, Clone)]
pub struct DimensionSetup {
    pub p: usize,
    pub sigma_u: SymMatrix,
    error_sampler: GaussianSampler,
    var: Var1Process,
}

impl DimensionSetup {
    pub fn new(config: &ExperimentConfig, p: usize) -> Result<Self> {
        let mut rng = stream_rng(config.seed, error_cov_stream(p));
        let sigma_u = generate_sparse_error_cov(&config.calib, p, &mut rng, config.max_attempts)?;
        let error_sampler = GaussianSampler::centered(&sigma_u)?;
        Ok(DimensionSetup {
            p,
            sigma_u,
            error_sampler,
            var: Var1Process::new(&config.calib)?,
        })
    }
}

pub fn run_replication(
    config: &ExperimentConfig,
    p: usize,
    rep: usize,
) -> Result<ReplicationRecord> {
    let setup = DimensionSetup::new(config, p)?;
    Ok(run_replication_with(config, &setup, rep))
}

/// Runs one replication. Failures inside the pipeline are recorded on the
/// returned record rather than propagated.
pub fn run_replication_with(
    config: &ExperimentConfig,
    setup: &DimensionSetup,
    rep: usize,
) -> ReplicationRecord {
    let mut record = ReplicationRecord::empty(setup.p, rep);
    if let Err(e) = replicate(config, setup, &mut record) {
        record.fail("pipeline", &e);
    }
    record
}

fn replicate(
    config: &ExperimentConfig,
    setup: &DimensionSetup,
    record: &mut ReplicationRecord,
) -> Result<()> {
    let p = setup.p;
    let calib = &config.calib;
    let mut rng = stream_rng(config.seed, replication_stream(p, record.rep));

    let loadings = draw_loadings(calib, p, &mut rng)?;
    let truth = GroundTruth::new(loadings, setup.sigma_u.clone(), &calib.cov_f)?;
    let factors = setup.var.simulate(config.t, config.burn_in, &mut rng);
    let panel = generate_panel_with(&truth, &setup.error_sampler, &factors, &mut rng)?;

    let fit = FactorFit::estimate(&panel)?;
    let moments = residual_moments(&fit.residuals)?;
    let omega = threshold_level(calib.threshold_c, panel.k(), p, config.t)?;
    record.omega = Some(omega);
    let idio = adaptive_threshold(&moments, omega);
    let estimate = FactorCovEstimate::from_fit(&fit, idio)?;
    let sigma_hat = assemble_sigma(&estimate);
    let sample = sample_cov(panel.y())?;

    let normalizer = SigmaNormalizer::new(&truth.sigma_full)?;
    for (estimator, m) in [
        (Estimator::Thresholded, &sigma_hat),
        (Estimator::Sample, &sample),
    ] {
        let diff = m.sub(&truth.sigma_full)?;
        record.set(estimator, Metric::SigmaNorm, normalizer.norm(&diff)?);
        record.set(estimator, Metric::MaxNorm, max_norm(&diff));
    }

    record.idio_min_eigenvalue = min_eigenvalue(&estimate.idio_cov().matrix).ok();
    record.thresholded_min_eigenvalue = min_eigenvalue(&sigma_hat).ok();
    let sample_values = sample.eigenvalues()?;
    record.sample_min_eigenvalue = Some(sample_values[0]);
    record.sample_operator_norm = Some(sample_values[0].abs().max(sample_values[p - 1].abs()));

    if p <= config.inverse_p_cap {
        let truth_inv = normalizer.reference_inverse();
        match woodbury_precision(&estimate) {
            Ok(prec) => record.set(
                Estimator::Thresholded,
                Metric::InvOperatorNorm,
                operator_norm(prec.sub(&truth_inv)?.as_matrix())?,
            ),
            Err(e) => record.fail("thresholded_inverse", &e),
        }
        match invert_spd(&sample) {
            Ok(inv) => record.set(
                Estimator::Sample,
                Metric::InvOperatorNorm,
                operator_norm(inv.sub(&truth_inv)?.as_matrix())?,
            ),
            Err(e) => record.fail("sample_inverse", &e),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub p: usize,
    pub estimator: Estimator,
    pub metric: Metric,
    pub mean: f64,
    pub sd: f64,
    pub n_effective: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub rows: Vec<SummaryRow>,
    /// Sorted by `(p, rep)`.
    pub records: Vec<ReplicationRecord>,
}

impl ExperimentRun {
    pub fn row(&self, p: usize, estimator: Estimator, metric: Metric) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.p == p && r.estimator == estimator && r.metric == metric)
    }
}

/// Runs the full sweep. The output directory is checked for writability
/// before any simulation starts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    ensure_writable(&config.output_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| FactorCovError::Precondition(format!("cannot build thread pool: {e}")))?;

    let mut records = Vec::with_capacity(config.p_grid.len() * config.reps);
    for &p in &config.p_grid {
        let setup = DimensionSetup::new(config, p)?;
        let batch: Vec<ReplicationRecord> = pool.install(|| {
            (0..config.reps)
                .into_par_iter()
                .map(|rep| run_replication_with(config, &setup, rep))
                .collect()
        });
        records.extend(batch);
    }
    let rows = summarize(&records, config);
    Ok(ExperimentRun { rows, records })
}

/// Mean and sample standard deviation (divisor `n − 1`, zero for `n = 1`).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Aggregates records into rows sorted by `(metric, estimator, p)`. Inverse
/// metrics are omitted for dimensions above the inverse cap.
pub fn summarize(records: &[ReplicationRecord], config: &ExperimentConfig) -> Vec<SummaryRow> {
    let mut grid = config.p_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        for estimator in Estimator::ALL {
            for &p in &grid {
                if metric == Metric::InvOperatorNorm && p > config.inverse_p_cap {
                    continue;
                }
                let mut by_rep: Vec<&ReplicationRecord> =
                    records.iter().filter(|r| r.p == p).collect();
                by_rep.sort_by_key(|r| r.rep);
                let values: Vec<f64> = by_rep
                    .iter()
                    .filter_map(|r| r.metric(estimator, metric))
                    .collect();
                let (mean, sd) = mean_sd(&values);
                rows.push(SummaryRow {
                    p,
                    estimator,
                    metric,
                    mean,
                    sd,
                    n_effective: values.len(),
                });
            }
        }
    }
    rows
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FactorCovError::io(dir, e))?;
    let probe = dir.join(".factorcov_write_probe");
    fs::write(&probe, b"").map_err(|e| FactorCovError::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| FactorCovError::io(&probe, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| FactorCovError::io(path, e))
}

pub const SUMMARY_HEADER: &str = "p,estimator,metric,mean,sd,n_effective";

pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.p,
            r.estimator,
            r.metric,
            format_f64(r.mean),
            format_f64(r.sd),
            r.n_effective
        ));
    }
    s
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let bad = |line: usize, msg: String| FactorCovError::Parse {
        location: format!("summary.csv:{line}"),
        message: msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SUMMARY_HEADER => {}
        other => return Err(bad(1, format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(idx + 1, format!("expected 6 fields, got {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| bad(idx + 1, format!("{s:?}: {e}")))
        };
        rows.push(SummaryRow {
            p: f[0].parse().map_err(|e| bad(idx + 1, format!("{e}")))?,
            estimator: Estimator::parse(f[1])
                .ok_or_else(|| bad(idx + 1, format!("estimator {:?}", f[1])))?,
            metric: Metric::parse(f[2])
                .ok_or_else(|| bad(idx + 1, format!("metric {:?}", f[2])))?,
            mean: num(f[3])?,
            sd: num(f[4])?,
            n_effective: f[5].parse().map_err(|e| bad(idx + 1, format!("{e}")))?,
        });
    }
    Ok(rows)
}

/// Writes `summary.csv`, one `curve_<metric>.csv` per metric present, and
/// `config_resolved.txt` into `config.output_dir`. Returns the written paths.
pub fn emit_outputs(rows: &[SummaryRow], config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(FactorCovError::Precondition(
            "no summary rows to write".into(),
        ));
    }
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| FactorCovError::io(dir, e))?;
    let mut written = Vec::new();

    let summary = dir.join("summary.csv");
    write_file(&summary, &render_summary(rows))?;
    written.push(summary);

    for metric in Metric::ALL {
        let metric_rows: Vec<&SummaryRow> = rows.iter().filter(|r| r.metric == metric).collect();
        if metric_rows.is_empty() {
            continue;
        }
        let mut ps: Vec<usize> = metric_rows.iter().map(|r| r.p).collect();
        ps.sort_unstable();
        ps.dedup();
        let mut s = String::from("p,thresholded_mean,thresholded_sd,sample_mean,sample_sd\n");
        for p in ps {
            let cell = |e: Estimator| {
                metric_rows
                    .iter()
                    .find(|r| r.p == p && r.estimator == e)
                    .map(|r| (format_f64(r.mean), format_f64(r.sd)))
                    .unwrap_or_else(|| ("NaN".into(), "NaN".into()))
            };
            let (tm, tsd) = cell(Estimator::Thresholded);
            let (sm, ssd) = cell(Estimator::Sample);
            s.push_str(&format!("{p},{tm},{tsd},{sm},{ssd}\n"));
        }
        let path = dir.join(format!("curve_{metric}.csv"));
        write_file(&path, &s)?;
        written.push(path);
    }

    let echo = dir.join("config_resolved.txt");
    write_file(&echo, &render_kv(&config.to_pairs()))?;
    written.push(echo);
    Ok(written)
}

/// Per-replication log: one line per `(p, rep, estimator, metric)`, plus the
/// failure tags and diagnostics of each replication.
pub fn write_replication_log(records: &[ReplicationRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| FactorCovError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    let mut out = String::from(
        "p,rep,estimator,metric,value,omega,idio_min_eigenvalue,thresholded_min_eigenvalue,sample_min_eigenvalue,failures\n",
    );
    for r in records {
        for estimator in Estimator::ALL {
            for metric in Metric::ALL {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.p,
                    r.rep,
                    estimator,
                    metric,
                    opt(r.metric(estimator, metric)),
                    opt(r.omega),
                    opt(r.idio_min_eigenvalue),
                    opt(r.thresholded_min_eigenvalue),
                    opt(r.sample_min_eigenvalue),
                    r.failures.join(";"),
                ));
            }
        }
    }
    w.write_all(out.as_bytes())
        .map_err(|e| FactorCovError::io(path, e))?;
    w.flush().map_err(|e| FactorCovError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            t: 60,
            p_grid: vec![10, 20],
            reps: 3,
            seed: 99,
            output_dir: dir.to_path_buf(),
            threads: 2,
            burn_in: 50,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            t: 500,
            ..small_config(dir.path())
        };
        let a = run_replication(&config, 20, 4).unwrap();
        let b = run_replication(&config, 20, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        for e in Estimator::ALL {
            for m in Metric::ALL {
                assert!(a.metric(e, m).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn single_rep_has_zero_sd() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            reps: 1,
            ..small_config(dir.path())
        };
        let run = run_experiment(&config).unwrap();
        assert!(run.rows.iter().all(|r| r.sd == 0.0 && r.n_effective == 1));
        assert_eq!(run.rows.len(), 3 * 2 * 2);
    }

    #[test]
    fn rows_sorted_and_capped() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            inverse_p_cap: 15,
            ..small_config(dir.path())
        };
        let run = run_experiment(&config).unwrap();
        let keys: Vec<_> = run
            .rows
            .iter()
            .map(|r| (r.metric, r.estimator, r.p))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(run
            .row(20, Estimator::Sample, Metric::InvOperatorNorm)
            .is_none());
        assert!(run
            .row(10, Estimator::Sample, Metric::InvOperatorNorm)
            .is_some());
    }

    #[test]
    fn summary_matches_recomputation() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let run = run_experiment(&config).unwrap();
        for row in &run.rows {
            let vals: Vec<f64> = run
                .records
                .iter()
                .filter(|r| r.p == row.p)
                .filter_map(|r| r.metric(row.estimator, row.metric))
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert_eq!(row.n_effective, vals.len());
            assert!((row.mean - mean).abs() <= 1e-12 * mean.abs());
            assert!((row.sd - var.sqrt()).abs() <= 1e-12 * mean.abs());
        }
    }

    #[test]
    fn outputs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let run = run_experiment(&config).unwrap();
        let written = emit_outputs(&run.rows, &config).unwrap();
        assert_eq!(written.len(), 5);
        for name in [
            "summary.csv",
            "curve_sigma_norm.csv",
            "curve_max_norm.csv",
            "curve_inv_operator_norm.csv",
            "config_resolved.txt",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(parse_summary(&text).unwrap(), run.rows);

        let echoed = ExperimentConfig::from_file(&dir.path().join("config_resolved.txt")).unwrap();
        assert_eq!(echoed, config);

        assert!(matches!(
            emit_outputs(&[], &config),
            Err(FactorCovError::Precondition(_))
        ));
    }

    #[test]
    fn unwritable_output_dir_fails_early() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let config = small_config(&blocker.join("sub"));
        assert!(matches!(
            run_experiment(&config),
            Err(FactorCovError::Io { .. })
        ));
    }

    #[test]
    fn doubling_reps_keeps_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path());
        let short = run_experiment(&config).unwrap();
        let long = run_experiment(&ExperimentConfig { reps: 6, ..config }).unwrap();
        for r in &short.records {
            let twin = long
                .records
                .iter()
                .find(|x| x.p == r.p && x.rep == r.rep)
                .unwrap();
            assert_eq!(r, twin);
        }
    }

    #[test]
    fn mean_sd_edge_cases() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_sd(&[]).0.is_nan());
    }

    #[test]
    fn config_validation() {
        let bad = ExperimentConfig {
            reps: 0,
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            p_grid: vec![1],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(ExperimentConfig::default().p_grid.len(), 30);
    }
}
