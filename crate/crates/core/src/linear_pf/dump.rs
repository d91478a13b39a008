//! Row-major matrix files for diagnostics.

use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    /// One row per line, comma separated, shortest round-trip formatting.
    Csv,
    /// Little-endian `f64` values, row-major, no header.
    Binary,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(MatrixFormat::Csv),
            "bin" | "binary" => Ok(MatrixFormat::Binary),
            other => Err(Error::Schema(format!("unknown matrix format `{other}`"))),
        }
    }
}

pub fn write_matrix<W: Write>(m: &DMatrix<f64>, format: MatrixFormat, mut w: W) -> Result<()> {
    match format {
        MatrixFormat::Csv => {
            for r in 0..m.nrows() {
                let line: Vec<String> = (0..m.ncols()).map(|c| format!("{:?}", m[(r, c)])).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
        MatrixFormat::Binary => {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.write_all(&m[(r, c)].to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a binary dump with `cols` columns.
pub fn read_matrix_binary<R: Read>(mut r: R, cols: usize) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if cols == 0 || bytes.len() % (8 * cols) != 0 {
        return Err(Error::Dimension(format!("{} bytes is not a whole number of {cols}-column rows", bytes.len())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DMatrix::from_row_slice(values.len() / cols, cols, &values))
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut values = Vec::new();
    let mut cols = None;
    for rec in rdr.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        for field in rec.iter() {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Dimension(format!("bad matrix entry `{field}`")))?,
            );
        }
    }
    let cols = cols.unwrap_or(0);
    let rows = values.len().checked_div(cols).unwrap_or(0);
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}
