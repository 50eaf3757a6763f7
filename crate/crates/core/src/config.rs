//! Flat `key = value` configuration files.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Lists are
//! comma-separated. Matrices are written row-major as a single list.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{FactorCovError, Result};

/// Where a value came from, for error messages.
#[derive(Debug, Clone)]
pub struct KvSource {
    pub name: String,
    pub line: usize,
}

impl KvSource {
    pub fn new(name: impl Into<String>, line: usize) -> Self {
        KvSource {
            name: name.into(),
            line,
        }
    }

    pub fn error(&self, message: impl Into<String>) -> FactorCovError {
        FactorCovError::Parse {
            location: format!("{}:{}", self.name, self.line),
            message: message.into(),
        }
    }

    pub fn parse<T>(&self, value: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        value
            .trim()
            .parse()
            .map_err(|e: T::Err| self.error(format!("cannot parse {value:?}: {e}")))
    }
}

#[derive(Debug, Clone)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub source: KvSource,
}

pub fn parse_kv(text: &str, name: &str) -> Result<Vec<KvEntry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let source = KvSource::new(name, idx + 1);
        let Some((key, value)) = line.split_once('=') else {
            return Err(source.error(format!("expected `key = value`, got {line:?}")));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(source.error("empty key"));
        }
        out.push(KvEntry {
            key: key.to_string(),
            value: value.trim().to_string(),
            source,
        });
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<KvEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| FactorCovError::io(path, e))?;
    parse_kv(&text, &path.display().to_string())
}

pub fn render_kv(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(v);
        s.push('\n');
    }
    s
}

/// Parses exactly `expected` comma-separated numbers.
pub fn parse_list(value: &str, expected: usize, src: &KvSource) -> Result<Vec<f64>> {
    let items: Vec<f64> = value
        .split(',')
        .map(|x| src.parse::<f64>(x))
        .collect::<Result<_>>()?;
    if items.len() != expected {
        return Err(src.error(format!("expected {expected} values, got {}", items.len())));
    }
    Ok(items)
}

pub fn format_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// A dimension grid: either `start:stop:step` (inclusive) or a comma list.
pub fn parse_grid(value: &str, src: &KvSource) -> Result<Vec<usize>> {
    let value = value.trim();
    if value.contains(':') {
        let parts: Vec<usize> = value
            .split(':')
            .map(|x| src.parse(x))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(src.error("range grid must be start:stop:step"));
        };
        if step == 0 || stop < start {
            return Err(src.error("range grid needs step > 0 and stop >= start"));
        }
        return Ok((start..=stop).step_by(step).collect());
    }
    value.split(',').map(|x| src.parse(x)).collect()
}

pub fn format_grid(grid: &[usize]) -> String {
    grid.iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
