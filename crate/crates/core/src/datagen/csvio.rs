//! Comma-separated numeric matrices.
//!
//! Lines starting with `#` are comments (typically one header line). Values are written
//! with Rust's shortest round-trip formatting, so a write/read cycle is bitwise exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ndstats::Matrix;

pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let bad = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        msg,
    };
    let mut cols = None;
    let mut rows = 0usize;
    let mut data = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(bad(line, e.to_string()));
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.get(0).is_some_and(|c| c.starts_with('#'))
            || (record.len() == 1 && record[0].is_empty())
        {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(bad(
                    line,
                    format!("ragged row: {} fields, expected {c}", record.len()),
                ))
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                bad(
                    line,
                    format!("non-numeric cell {cell:?} in column {}", j + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(bad(
                    line,
                    format!("non-finite cell {cell:?} in column {}", j + 1),
                ));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| bad(0, "no data rows".into()))?;
    Matrix::new(rows, cols, data)
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, path)
}

pub fn format_matrix_csv(m: &Matrix, header: Option<&str>) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 20);
    if let Some(h) = header {
        let _ = writeln!(out, "# {h}");
    }
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(m: &Matrix, path: &Path, header: Option<&str>) -> Result<()> {
    std::fs::write(path, format_matrix_csv(m, header)).map_err(|e| Error::io(path, e))
}
