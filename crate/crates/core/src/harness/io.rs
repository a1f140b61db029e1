//! Row-major CSV matrices.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reads a numeric CSV, one observation per row. With `header`, the first
/// line is skipped.
pub fn read_matrix_csv<R: Read>(reader: R, header: bool) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1 + usize::from(header);
        let record = record.map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    reason: format!("{field:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            reason: "no data rows".into(),
        });
    }
    let (n, d) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

pub fn read_matrix_file(path: &Path, header: bool) -> Result<DMatrix<f64>> {
    read_matrix_csv(File::open(path)?, header)
}

/// Writes a matrix in scientific notation with 17 significant digits, which
/// round-trips every `f64`.
pub fn write_matrix_csv<W: Write>(writer: W, m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| format!("{v:.16e}")))
            .map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(File::create(path)?, m)
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
