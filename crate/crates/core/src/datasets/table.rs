//! Plain numeric CSV: an optional header line followed by rows of floats.
//! Floats are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numlin::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: Matrix,
}

impl Table {
    /// Table with columns named `x1..xD`.
    pub fn from_matrix(data: Matrix) -> Self {
        let columns = (1..=data.cols()).map(|i| format!("x{i}")).collect();
        Table { columns, data }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// `{:.16e}`: 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Reads a table. The first line is a header when any of its cells is not a
/// number; otherwise columns are named `x1..xD`. Line numbers in errors are
/// 1-based and count the header.
pub fn csv_read<R: Read>(reader: R) -> Result<Table> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut columns: Option<Vec<String>> = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if i == 0 && rec.iter().any(|c| parse_cell(c).is_none()) {
            columns = Some(rec.iter().map(str::to_owned).collect());
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::parse(line, format!("expected {w} fields, found {}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v = parse_cell(cell)
                .ok_or_else(|| Error::parse(line, format!("column {}: '{cell}' is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("column {}: non-finite value", j + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    let data = Matrix::from_vec_unchecked(rows, cols, values);
    Ok(match columns {
        Some(columns) => Table { columns, data },
        None => Table::from_matrix(data),
    })
}

pub fn csv_read_path(path: impl AsRef<Path>) -> Result<Table> {
    csv_read(BufReader::new(File::open(path)?))
}

pub fn csv_write<W: Write>(writer: W, table: &Table) -> Result<()> {
    if table.columns.len() != table.data.cols() {
        return Err(Error::dim(format!(
            "{} column names for {} columns",
            table.columns.len(),
            table.data.cols()
        )));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Format(format!("{other:?}")),
    };
    w.write_record(&table.columns).map_err(io)?;
    for row in table.data.row_iter() {
        w.write_record(row.iter().map(|&v| format_float(v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_write_path(path: impl AsRef<Path>, table: &Table) -> Result<()> {
    csv_write(BufWriter::new(File::create(path)?), table)
}
