use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use factorcov::config::{parse_grid, KvSource};
use factorcov::experiment::{
    emit_outputs, run_experiment, write_replication_log, ExperimentConfig,
};
use factorcov::io::{format_f64, read_matrix_csv, read_sur_manifest, write_matrix_csv};
use factorcov::sur::{feasible_gls_weighted, sur_ols, sur_threshold, GlsWeighting};
use factorcov::{
    adaptive_threshold, assemble_sigma, invert_spd, min_eigenvalue, residual_moments,
    threshold_level, woodbury_precision, FactorCovEstimate, FactorFit, Panel, Result,
};

#[derive(Parser)]
#[command(
    name = "factorcov",
    version,
    about = "Factor-model covariance estimation with adaptive thresholding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the covariance and precision of a panel with observed factors.
    Estimate {
        /// Series, p rows by T columns.
        #[arg(long)]
        y: PathBuf,
        /// Factors, K rows by T columns.
        #[arg(long)]
        f: PathBuf,
        /// Skip the first line of each CSV.
        #[arg(long)]
        header: bool,
        #[arg(long, default_value_t = 0.10)]
        threshold_c: f64,
        /// Output prefix; files are written as `<prefix>_<name>.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the Monte Carlo sweep over a grid of dimensions.
    Simulate {
        /// Key-value config file; flags given here override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `start:stop:step` or a comma list.
        #[arg(long)]
        p_grid: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        /// Overridden by FACTORCOV_THREADS when set.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        inverse_p_cap: Option<usize>,
        #[arg(long)]
        threshold_c: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write every replication's values to this file.
        #[arg(long)]
        dump_replications: Option<PathBuf>,
    },
    /// Feasible GLS for a system of seemingly unrelated regressions.
    Gls {
        /// Manifest with one `y_path,x_path` line per equation.
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        threshold_c: f64,
        /// Weight by the inverse of the inverted residual covariance estimate.
        #[arg(long)]
        literal_inverse_weight: bool,
        #[arg(long)]
        header: bool,
        /// Write the coefficients to `<prefix>_coefficients.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate {
            y,
            f,
            header,
            threshold_c,
            out,
        } => estimate(&y, &f, header, threshold_c, &out),
        Command::Simulate {
            config,
            seed,
            p_grid,
            reps,
            threads,
            t,
            inverse_p_cap,
            threshold_c,
            out_dir,
            dump_replications,
        } => resolve_config(
            config,
            seed,
            p_grid,
            reps,
            threads,
            t,
            inverse_p_cap,
            threshold_c,
            out_dir,
        )
        .and_then(|c| simulate(&c, dump_replications.as_deref())),
        Command::Gls {
            manifest,
            threshold_c,
            literal_inverse_weight,
            header,
            out,
        } => gls(
            &manifest,
            threshold_c,
            literal_inverse_weight,
            header,
            out.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.tag());
            ExitCode::FAILURE
        }
    }
}

fn with_suffix(prefix: &Path, name: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!("_{name}.csv"));
    PathBuf::from(s)
}

fn estimate(y: &Path, f: &Path, header: bool, c: f64, out: &Path) -> Result<()> {
    let panel = Panel::new(read_matrix_csv(y, header)?, read_matrix_csv(f, header)?)?;
    let fit = FactorFit::estimate(&panel)?;
    let omega = threshold_level(c, panel.k(), panel.p(), panel.t())?;
    let idio = adaptive_threshold(&residual_moments(&fit.residuals)?, omega);
    let est = FactorCovEstimate::from_fit(&fit, idio)?;
    let sigma = assemble_sigma(&est);

    write_matrix_csv(&with_suffix(out, "sigma"), sigma.as_matrix())?;
    write_matrix_csv(&with_suffix(out, "idio"), est.idio_cov().matrix.as_matrix())?;
    write_matrix_csv(&with_suffix(out, "mask"), &est.idio_cov().mask_matrix())?;
    write_matrix_csv(&with_suffix(out, "loadings"), &fit.loadings)?;
    write_matrix_csv(&with_suffix(out, "factor_cov"), fit.factor_cov.as_matrix())?;

    println!("p = {}, T = {}, K = {}", panel.p(), panel.t(), panel.k());
    println!("omega = {}", format_f64(omega));
    println!(
        "kept off-diagonal entries = {}",
        est.idio_cov().kept_off_diagonal()
    );
    println!(
        "idio min eigenvalue = {}",
        format_f64(min_eigenvalue(&est.idio_cov().matrix)?)
    );
    match woodbury_precision(&est) {
        Ok(prec) => {
            write_matrix_csv(&with_suffix(out, "precision"), prec.as_matrix())?;
            println!("positive definite: yes");
        }
        Err(e) => {
            println!("positive definite: no ({e}); precision not written");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn resolve_config(
    path: Option<PathBuf>,
    seed: Option<u64>,
    p_grid: Option<String>,
    reps: Option<usize>,
    threads: Option<usize>,
    t: Option<usize>,
    inverse_p_cap: Option<usize>,
    threshold_c: Option<f64>,
    out_dir: Option<PathBuf>,
) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::from_file(&p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = seed {
        config.seed = v;
    }
    if let Some(v) = p_grid {
        config.p_grid = parse_grid(&v, &KvSource::new("--p-grid", 0))?;
    }
    if let Some(v) = reps {
        config.reps = v;
    }
    if let Some(v) = threads {
        config.threads = v;
    }
    if let Ok(v) = std::env::var("FACTORCOV_THREADS") {
        config.threads = KvSource::new("FACTORCOV_THREADS", 0).parse(&v)?;
    }
    if let Some(v) = t {
        config.t = v;
    }
    if let Some(v) = inverse_p_cap {
        config.inverse_p_cap = v;
    }
    if let Some(v) = threshold_c {
        config.calib.threshold_c = v;
    }
    if let Some(v) = out_dir {
        config.output_dir = v;
    }
    Ok(config)
}

fn simulate(config: &ExperimentConfig, dump: Option<&Path>) -> Result<()> {
    let run = run_experiment(config)?;
    for path in emit_outputs(&run.rows, config)? {
        println!("wrote {}", path.display());
    }
    if let Some(path) = dump {
        write_replication_log(&run.records, path)?;
        println!("wrote {}", path.display());
    }
    let failed = run
        .records
        .iter()
        .filter(|r| !r.failures.is_empty())
        .count();
    if failed > 0 {
        println!(
            "{failed} of {} replications recorded failures",
            run.records.len()
        );
    }
    Ok(())
}

fn gls(manifest: &Path, c: f64, literal: bool, header: bool, out: Option<&Path>) -> Result<()> {
    let model = read_sur_manifest(manifest, header)?;
    let ols = sur_ols(&model)?;
    let thresholded = sur_threshold(&ols, c)?;
    let precision = invert_spd(&thresholded.matrix)?;
    let weighting = if literal {
        GlsWeighting::LiteralInverse
    } else {
        GlsWeighting::Precision
    };
    let fit = feasible_gls_weighted(&model, &precision, weighting)?;

    println!("omega = {}", format_f64(thresholded.omega));
    println!(
        "kept off-diagonal entries = {}",
        thresholded.kept_off_diagonal()
    );
    println!("equation,index,coefficient");
    for i in 0..model.p() {
        for (j, b) in fit.block(i).iter().enumerate() {
            println!("{i},{j},{}", format_f64(*b));
        }
    }
    if let Some(prefix) = out {
        let coef = nalgebra::DMatrix::from_column_slice(
            fit.coefficients.len(),
            1,
            fit.coefficients.as_slice(),
        );
        let path = with_suffix(prefix, "coefficients");
        write_matrix_csv(&path, &coef)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
