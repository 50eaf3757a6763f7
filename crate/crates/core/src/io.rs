//! CSV ingestion and export.
//!
//! Matrices are written densely, row-major, one row per line, 17 significant
//! digits, so a written file reads back bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{FactorCovError, Result};
use crate::sur::{SurEquation, SurModel};

/// Formats a float with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn read_matrix_csv(path: &Path, has_header: bool) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match ncols {
            None => ncols = Some(record.len()),
            Some(n) if n != record.len() => {
                return Err(FactorCovError::Parse {
                    location: format!("{}:{}", path.display(), row + 1),
                    message: format!("expected {n} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| FactorCovError::Parse {
                location: format!("{}:{}:{}", path.display(), row + 1, col + 1),
                message: format!("not a number: {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(FactorCovError::Parse {
                    location: format!("{}:{}:{}", path.display(), row + 1, col + 1),
                    message: "non-finite value".into(),
                });
            }
            data.push(value);
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| FactorCovError::Parse {
        location: path.display().to_string(),
        message: "file holds no data".into(),
    })?;
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

/// A vector stored either as one row or as one column.
pub fn read_vector_csv(path: &Path, has_header: bool) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path, has_header)?;
    match m.shape() {
        (1, n) => Ok(DVector::from_iterator(n, m.iter().copied())),
        (n, 1) => Ok(DVector::from_iterator(n, m.iter().copied())),
        (r, c) => Err(FactorCovError::Parse {
            location: path.display().to_string(),
            message: format!("expected a single row or column, found {r}x{c}"),
        }),
    }
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| FactorCovError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in m.row_iter() {
        let line = row
            .iter()
            .map(|&x| format_f64(x))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}").map_err(|e| FactorCovError::io(path, e))?;
    }
    w.flush().map_err(|e| FactorCovError::io(path, e))
}

/// Loads a SUR model from a manifest. Each non-comment line is
/// `y_path,x_path`; relative paths resolve against the manifest's directory.
/// `y` holds `T` values, `x` is `T × K_i`.
pub fn read_sur_manifest(path: &Path, has_header: bool) -> Result<SurModel> {
    let text = std::fs::read_to_string(path).map_err(|e| FactorCovError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut equations = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((y_path, x_path)) = line.split_once(',') else {
            return Err(FactorCovError::Parse {
                location: format!("{}:{}", path.display(), idx + 1),
                message: "expected `y_path,x_path`".into(),
            });
        };
        let y = read_vector_csv(&resolve(y_path.trim()), has_header)?;
        let x = read_matrix_csv(&resolve(x_path.trim()), has_header)?;
        equations.push(SurEquation { y, x });
    }
    SurModel::new(equations)
}

fn csv_error(path: &Path, e: csv::Error) -> FactorCovError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FactorCovError::io(path, io),
        other => FactorCovError::Parse {
            location: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(
            2,
            3,
            &[
                0.1,
                -1.0 / 3.0,
                1e-300,
                123456.789,
                std::f64::consts::PI,
                0.0,
            ],
        );
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(read_matrix_csv(&path, false).unwrap(), m);
    }

    #[test]
    fn header_and_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(
            read_matrix_csv(&path, true).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])
        );
        assert!(read_matrix_csv(&path, false).is_err());

        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(
            read_matrix_csv(&path, false),
            Err(FactorCovError::Parse { .. })
        ));
        assert!(matches!(
            read_matrix_csv(&dir.path().join("missing.csv"), false),
            Err(FactorCovError::Io { .. })
        ));
    }

    #[test]
    fn manifest_loads_equations() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("y1.csv"), "1\n2\n3\n4\n").unwrap();
        std::fs::write(dir.path().join("x1.csv"), "1,0\n1,1\n1,2\n1,3\n").unwrap();
        std::fs::write(dir.path().join("y2.csv"), "2,4,6,8\n").unwrap();
        std::fs::write(dir.path().join("x2.csv"), "1\n2\n3\n4\n").unwrap();
        let manifest = dir.path().join("sur.txt");
        std::fs::write(
            &manifest,
            "# two equations\ny1.csv, x1.csv\ny2.csv,x2.csv\n",
        )
        .unwrap();
        let model = read_sur_manifest(&manifest, false).unwrap();
        assert_eq!(model.p(), 2);
        assert_eq!(model.t(), 4);
        assert_eq!(model.block_sizes(), vec![2, 1]);
    }
}
