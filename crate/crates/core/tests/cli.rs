//! End-to-end runs of the `factorcov` binary.

use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use factorcov::io::{read_matrix_csv, write_matrix_csv};

fn factorcov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factorcov"))
        .args(args)
        .env_remove("FACTORCOV_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn write_panel(dir: &Path, p: usize, t: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = normal(&mut rng, 2, t);
    let b = normal(&mut rng, p, 2);
    let y = &b * &f + normal(&mut rng, p, t) * 0.5;
    write_matrix_csv(&dir.join("y.csv"), &y).unwrap();
    write_matrix_csv(&dir.join("f.csv"), &f).unwrap();
}

#[test]
fn estimate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_panel(dir.path(), 8, 120);
    let prefix = dir.path().join("est");
    let out = factorcov(&[
        "estimate",
        "--y",
        dir.path().join("y.csv").to_str().unwrap(),
        "--f",
        dir.path().join("f.csv").to_str().unwrap(),
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("positive definite: yes"));

    for name in [
        "sigma",
        "precision",
        "idio",
        "mask",
        "loadings",
        "factor_cov",
    ] {
        let path = dir.path().join(format!("est_{name}.csv"));
        assert!(path.exists(), "missing {name}");
    }
    let sigma = read_matrix_csv(&dir.path().join("est_sigma.csv"), false).unwrap();
    let prec = read_matrix_csv(&dir.path().join("est_precision.csv"), false).unwrap();
    assert_eq!(sigma.shape(), (8, 8));
    assert!((prec * sigma - DMatrix::<f64>::identity(8, 8)).amax() < 1e-8);
    let loadings = read_matrix_csv(&dir.path().join("est_loadings.csv"), false).unwrap();
    assert_eq!(loadings.shape(), (8, 2));
}

#[test]
fn estimate_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("y.csv"), "1,2,3\n4,x,6\n").unwrap();
    std::fs::write(dir.path().join("f.csv"), "1,2,3\n").unwrap();
    let out = factorcov(&[
        "estimate",
        "--y",
        dir.path().join("y.csv").to_str().unwrap(),
        "--f",
        dir.path().join("f.csv").to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("y.csv:2:2"), "{err}");
}

#[test]
fn simulate_matches_golden_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = factorcov(&[
        "simulate",
        "--p-grid",
        "20",
        "--reps",
        "5",
        "--seed",
        "20111201",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let got = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let golden = include_str!("data/golden_summary_p20_reps5.csv");
    assert_eq!(got, golden);
    for metric in ["sigma_norm", "max_norm", "inv_operator_norm"] {
        assert!(out_dir.join(format!("curve_{metric}.csv")).exists());
    }
    let echo = std::fs::read_to_string(out_dir.join("config_resolved.txt")).unwrap();
    assert!(echo.contains("seed = 20111201"));
    assert!(echo.contains("reps = 5"));
}

#[test]
fn simulate_flags_override_config_file_and_env_overrides_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.cfg");
    std::fs::write(
        &config,
        "# small run\nt = 200\np_grid = 10:30:10\nreps = 9\nthreads = 3\nseed = 1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_factorcov"))
        .args([
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--reps",
            "2",
            "--threads",
            "2",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ])
        .env("FACTORCOV_THREADS", "1")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echo = std::fs::read_to_string(out_dir.join("config_resolved.txt")).unwrap();
    assert!(echo.contains("t = 200"));
    assert!(echo.contains("p_grid = 10,20,30"));
    assert!(echo.contains("reps = 2"));
    assert!(echo.contains("threads = 1"));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 3 * 2);
}

#[test]
fn simulate_rejects_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    std::fs::write(&config, "reps = 2\nrepz = 3\n").unwrap();
    let out = factorcov(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"));
}

#[test]
fn gls_prints_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = 80;
    let mut manifest = String::new();
    for i in 0..3 {
        let x = normal(&mut rng, t, 2);
        let y = &x * DMatrix::from_column_slice(2, 1, &[1.0, -2.0]) + normal(&mut rng, t, 1) * 0.1;
        write_matrix_csv(&dir.path().join(format!("x{i}.csv")), &x).unwrap();
        write_matrix_csv(&dir.path().join(format!("y{i}.csv")), &y).unwrap();
        manifest.push_str(&format!("y{i}.csv,x{i}.csv\n"));
    }
    let path = dir.path().join("sur.txt");
    std::fs::write(&path, manifest).unwrap();

    for extra in [None, Some("--literal-inverse-weight")] {
        let prefix = dir.path().join("gls");
        let mut args = vec![
            "gls",
            path.to_str().unwrap(),
            "--out",
            prefix.to_str().unwrap(),
        ];
        args.extend(extra);
        let out = factorcov(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(stdout(&out).contains("equation,index,coefficient"));
        let coef = read_matrix_csv(&dir.path().join("gls_coefficients.csv"), false).unwrap();
        assert_eq!(coef.nrows(), 6);
        for i in 0..3 {
            assert!((coef[2 * i] - 1.0).abs() < 0.05);
            assert!((coef[2 * i + 1] + 2.0).abs() < 0.05);
        }
    }
}
