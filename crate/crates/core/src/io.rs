//! Headerless numeric CSV in and out.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reads a rectangular numeric CSV. With `header`, the first line is skipped.
pub fn read_matrix(path: &Path, header: bool) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot read '{}': {e}", path.display())))?;
    parse_matrix(file, header).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_matrix<R: std::io::Read>(reader: R, header: bool) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("malformed CSV: {e}")))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Input(format!("row {}, column {}: '{s}' is not a finite number", i + 1, j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Input(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    let (n, k) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

/// Reads a single column (or a single row) as a vector.
pub fn read_vector(path: &Path, header: bool) -> Result<DVector<f64>> {
    let m = read_matrix(path, header)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Input(format!(
            "{}: expected a single column, found {}×{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Input(format!("cannot write '{}': {e}", path.display())))?;
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::Input(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-300, 0.1, 3.0, f64::MAX]);
        write_matrix(&path, &m).unwrap();
        assert_eq!(read_matrix(&path, false).unwrap(), m);
    }

    #[test]
    fn header_and_errors() {
        let m = parse_matrix("a,b\n1,2\n3,4\n".as_bytes(), true).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(matches!(parse_matrix("a,b\n1,2\n".as_bytes(), false), Err(Error::Input(_))));
        assert!(matches!(parse_matrix("1,2\n3\n".as_bytes(), false), Err(Error::Input(_))));
        assert!(matches!(parse_matrix("".as_bytes(), false), Err(Error::Input(_))));
        assert!(matches!(parse_matrix("1,nan\n".as_bytes(), false), Err(Error::Input(_))));
    }
}
