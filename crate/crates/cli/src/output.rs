//! CSV tables and file checksums.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Shortest round-trip text for `x`: plain decimals for moderate
/// magnitudes, scientific notation otherwise.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// An in-memory CSV table that refuses non-finite numbers.
#[derive(Debug, Clone)]
pub struct Csv {
    name: String,
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(name: &str, header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            name: name.to_string(),
            columns: header.len(),
            text,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<(), CliError> {
        assert_eq!(row.len(), self.columns, "row width differs from the header of {}", self.name);
        for (j, cell) in row.iter().enumerate() {
            if j > 0 {
                self.text.push(',');
            }
            match cell {
                Cell::Float(x) if !x.is_finite() => {
                    return Err(CliError::runtime(format!(
                        "non-finite value {x} in column {} of {}",
                        j + 1,
                        self.name
                    )))
                }
                Cell::Float(x) => self.text.push_str(&format_float(*x)),
                Cell::Int(i) => {
                    let _ = write!(self.text, "{i}");
                }
                Cell::Text(s) => self.text.push_str(&quote(s)),
                Cell::Empty => {}
            }
        }
        self.text.push('\n');
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}
