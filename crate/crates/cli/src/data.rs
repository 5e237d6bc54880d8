//! Numeric CSV ingestion and emission.
//!
//! Dialect: comma separated, `.` decimal point, UTF-8, with an optional
//! single header row detected by a non-numeric cell in the first row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

/// A rectangular table of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetTable {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl DatasetTable {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Entries of one column in row order.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Parse CSV text. Rows are 1-based in error messages, counting the header.
pub fn parse_table(text: &str, origin: &str) -> Result<DatasetTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| CliError::Parse(format!("{origin}: row {line}: {e}")))?;
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if i == 0 && record.iter().any(|c| parse_cell(c).is_none()) {
            header = Some(
                record
                    .iter()
                    .map(|c| c.trim().to_string())
                    .collect::<Vec<_>>(),
            );
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            match parse_cell(cell) {
                Some(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(CliError::Parse(format!(
                        "{origin}: row {line}, column {}: `{}` is not a finite number",
                        j + 1,
                        cell.trim()
                    )))
                }
            }
        }
        let expected = header.as_ref().map(Vec::len).or(rows.first().map(Vec::len));
        if let Some(width) = expected {
            if row.len() != width {
                return Err(CliError::Parse(format!(
                    "{origin}: row {line} has {} columns, expected {width}",
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Parse(format!("{origin}: no data rows")));
    }
    Ok(DatasetTable { header, rows })
}

pub fn read_table(path: &Path) -> Result<DatasetTable> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_table(&text, &path.display().to_string())
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Buffered CSV output that remembers its path for error messages.
pub struct CsvOut {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl CsvOut {
    pub fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self {
            path,
            writer: BufWriter::new(file),
        })
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) -> Result<()> {
        let line = cells
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(",");
        writeln!(self.writer, "{line}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Write a headerless numeric matrix; an empty file when there are no columns.
pub fn write_matrix(path: PathBuf, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    if rows.iter().any(|r| !r.is_empty()) {
        for r in rows {
            out.row(&r.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>())?;
        }
    }
    out.finish()
}

/// Row-major copy of a matrix.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Binary matrix as 0/1 cells; an empty file when there are no columns.
pub fn write_binary(path: PathBuf, rows: &[Vec<u8>]) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    if rows.iter().any(|r| !r.is_empty()) {
        for r in rows {
            out.row(&r.iter().map(u8::to_string).collect::<Vec<_>>())?;
        }
    }
    out.finish()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
