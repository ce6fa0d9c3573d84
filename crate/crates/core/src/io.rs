//! CSV and JSON output.
//!
//! Numbers are written in Rust's shortest round-trip form, so reading a file
//! back gives the exact `f64` that was written.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Writes equal-length columns under a header line.
pub fn write_columns(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    assert_eq!(header.len(), columns.len(), "one header per column");
    let rows = columns.first().map_or(0, |c| c.len());
    assert!(columns.iter().all(|c| c.len() == rows), "columns differ in length");
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..rows {
        line.clear();
        for (j, col) in columns.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{}", col[i]));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Config(format!("{} is empty", path.display()))),
    };
    let mut columns = vec![Vec::new(); header.len()];
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Config(format!(
                "{}: row {} has {} fields",
                path.display(),
                row + 2,
                fields.len()
            )));
        }
        for (col, f) in columns.iter_mut().zip(fields) {
            let v = f
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{}: row {}: {e}", path.display(), row + 2)))?;
            col.push(v);
        }
    }
    Ok((header, columns))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
