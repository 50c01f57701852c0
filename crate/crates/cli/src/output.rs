//! CSV tables and the JSON metadata sidecar.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Scientific notation with 17 significant digits, `NaN`/`inf` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn int(n: usize) -> String {
    n.to_string()
}

pub struct Table {
    name: String,
    headers: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&'static str]) -> Self {
        Self { name: name.to_string(), headers: headers.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(&self.name);
        let err = |e: csv::Error| CliError::io(format!("writing {}", path.display()), e.into());
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(&path).map_err(err)?;
        w.write_record(&self.headers).map_err(err)?;
        for row in &self.rows {
            w.write_record(row).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
pub struct Meta<'a, C: Serialize> {
    pub subcommand: &'a str,
    /// The configuration with every default filled in.
    pub config: &'a C,
    pub package_version: &'static str,
    pub threads: usize,
    pub seed: Option<u64>,
    pub cache: Option<String>,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub results: serde_json::Value,
}

pub fn write_meta<C: Serialize>(dir: &Path, meta: &Meta<'_, C>) -> Result<PathBuf, CliError> {
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            assert!(s.contains('e'));
        }
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }
}
