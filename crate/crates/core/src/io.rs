//! CSV reading and writing for panels.
//!
//! The layout is a header row of series names followed by one row per time
//! point, with no index column. Values are written with 17 significant
//! digits so a write/read cycle is lossless.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::PanelMatrix;

/// Formats a value with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_panel<R: Read>(reader: R) -> Result<(Vec<String>, PanelMatrix)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("row {}, column {}: {field:?}: {e}", i + 1, j + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let panel = PanelMatrix::from_rows(&rows)?;
    if panel.m() != names.len() {
        return Err(Error::Parse(format!(
            "{} header names but {} columns",
            names.len(),
            panel.m()
        )));
    }
    Ok((names, panel))
}

pub fn read_panel_file(path: impl AsRef<Path>) -> Result<(Vec<String>, PanelMatrix)> {
    read_panel(std::fs::File::open(path)?)
}

/// Writes `values` with the given header. When `names` is `None` the series
/// are named `s1, s2, ...`.
pub fn write_matrix<W: Write>(
    writer: W,
    names: Option<&[String]>,
    values: &DMatrix<f64>,
) -> Result<()> {
    let defaults;
    let names = match names {
        Some(n) => {
            if n.len() != values.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} names", values.ncols()),
                    found: format!("{} names", n.len()),
                });
            }
            n
        }
        None => {
            defaults = default_names(values.ncols());
            &defaults
        }
    };
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(names)?;
    for row in values.row_iter() {
        wtr.write_record(row.iter().map(|&v| format_f64(v)))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_file(
    path: impl AsRef<Path>,
    names: Option<&[String]>,
    values: &DMatrix<f64>,
) -> Result<()> {
    write_matrix(std::fs::File::create(path)?, names, values)
}

pub fn default_names(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("s{j}")).collect()
}
