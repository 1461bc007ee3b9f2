//! Plain CSV matrices: one row per line, comma separated, no header.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn read_matrix<T: Real, R: Read>(reader: R) -> Result<Array2<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if cols.is_some_and(|c| c != record.len()) {
            return Err(Error::Parse {
                line: line + 1,
                msg: format!("expected {} fields, found {}", cols.unwrap_or(0), record.len()),
            });
        }
        cols = Some(record.len());
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|e| Error::Parse {
                line: line + 1,
                msg: format!("{field:?}: {e}"),
            })?;
            values.push(T::lit(v));
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::Parse { line: rows, msg: e.to_string() })
}

pub fn write_matrix<T: Real, W: Write>(writer: W, m: ArrayView2<'_, T>) -> Result<()> {
    let mut out = BufWriter::new(writer);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.write_all(line.join(",").as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_matrix<T: Real>(path: impl AsRef<Path>) -> Result<Array2<T>> {
    read_matrix(File::open(path)?)
}

pub fn save_matrix<T: Real>(path: impl AsRef<Path>, m: ArrayView2<'_, T>) -> Result<()> {
    write_matrix(File::create(path)?, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn writes_lf_terminated_rows() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, array![[0.0, 1.5], [-2.0, 0.1]].view()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,1.5\n-2,0.1\n");
    }

    #[test]
    fn rejects_ragged_and_garbage() {
        assert!(matches!(read_matrix::<f64, _>("1,2\n3\n".as_bytes()), Err(Error::Parse { .. }) | Err(Error::Csv(_))));
        assert!(matches!(read_matrix::<f64, _>("1,x\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(v in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 6)) {
            let m = Array2::from_shape_vec((3, 2), v).unwrap();
            let mut buf = Vec::new();
            write_matrix(&mut buf, m.view()).unwrap();
            let back: Array2<f64> = read_matrix(buf.as_slice()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
