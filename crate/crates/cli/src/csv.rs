//! Plain CSV writer: one `# config_hash=` comment line, a header row, and
//! floating-point values with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

pub enum Cell {
    Int(usize),
    Float(f64),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Table {
    hash: String,
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(hash: &str, header: Vec<String>) -> Self {
        Table {
            hash: hash.to_string(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = format!("# config_hash={}\n{}\n", self.hash, self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Float(f) => format_float(*f),
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render())
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}
