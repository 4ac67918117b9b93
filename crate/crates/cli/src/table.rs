//! CSV dialect shared by every output: comma, LF, header row, floats with 17
//! significant digits.

use std::path::Path;

use crate::error::CliError;

pub fn float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// An in-memory table written in one go.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::ReaderBuilder::new()
            .from_path(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let header = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Fails with every missing column named.
    pub fn require(&self, names: &[&str], what: &str) -> Result<Vec<usize>, CliError> {
        let missing: Vec<&str> = names.iter().copied().filter(|n| self.index(n).is_none()).collect();
        if !missing.is_empty() {
            return Err(CliError::Config(format!("{what} is missing column(s): {}", missing.join(", "))));
        }
        Ok(names.iter().map(|n| self.index(n).unwrap()).collect())
    }

    /// Column `j` parsed as floats; empty cells are `None`.
    pub fn floats(&self, j: usize) -> Result<Vec<Option<f64>>, CliError> {
        self.rows
            .iter()
            .map(|r| {
                let cell = r[j].trim();
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>()
                    .map(Some)
                    .map_err(|_| CliError::Config(format!("column `{}`: `{cell}` is not a number", self.header[j])))
            })
            .collect()
    }
}
