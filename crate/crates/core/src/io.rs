//! CSV persistence for datasets. Numbers are written with Rust's shortest
//! round-trip formatting, so reading a file back yields the same bits.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::scalar::Real;

/// Shortest round-trip text for `v`: positional between 1e-5 and 1e16,
/// scientific outside that range.
pub fn format_real<T: Real>(v: T) -> String {
    let a = v.as_f64().abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn format_f64(v: f64) -> String {
    format_real(v)
}

/// Writes `x1,...,xp,y` followed by one row per observation.
pub fn write_dataset_csv<W: Write>(data: &Dataset<f64>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.x().row(i).iter().map(|&v| format_f64(v)).collect();
        rec.push(format_f64(data.y()[i]));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn dataset_to_csv_string(data: &Dataset<f64>) -> Result<String> {
    let mut buf = Vec::new();
    write_dataset_csv(data, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Reads the format written by [`write_dataset_csv`]. The header must be
/// exactly `x1,...,xp,y`.
pub fn read_dataset_csv<R: Read>(input: R, intercept: bool) -> Result<Dataset<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    if cols < 2 {
        return Err(Error::InvalidDataset("need at least one regressor and y".into()));
    }
    for (j, name) in header.iter().enumerate().take(cols - 1) {
        if name.trim() != format!("x{}", j + 1) {
            return Err(Error::InvalidDataset(format!("unexpected header field '{name}'")));
        }
    }
    if header[cols - 1].trim() != "y" {
        return Err(Error::InvalidDataset("last header field must be 'y'".into()));
    }
    let p = cols - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::InvalidDataset(format!("row {} has {} fields, expected {cols}", line + 1, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidDataset(format!("row {}: cannot parse '{field}'", line + 1)))?;
            if j < p {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = ys.len();
    Dataset::new(DMatrix::from_row_slice(n, p, &xs), DVector::from_vec(ys), intercept)
}

pub fn read_dataset_file(path: &Path, intercept: bool) -> Result<Dataset<f64>> {
    read_dataset_csv(std::fs::File::open(path)?, intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_linear_data, LinearModelSpec};
    use proptest::prelude::*;

    #[test]
    fn header_and_layout() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 2.5, -3.0]);
        let data = Dataset::new(x, DVector::from_vec(vec![0.3, 1e-300]), false).unwrap();
        let s = dataset_to_csv_string(&data).unwrap();
        assert_eq!(s, "x1,x2,y\n1,0.1,0.3\n2.5,-3,1e-300\n");
    }

    #[test]
    fn rejects_bad_header() {
        assert!(read_dataset_csv("a,b\n1,2\n".as_bytes(), false).is_err());
        assert!(read_dataset_csv("x1,x2\n1,2\n".as_bytes(), false).is_err());
        assert!(read_dataset_csv("x1,y\n1,zz\n".as_bytes(), false).is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(seed in 0u64..10_000, n in 1usize..40) {
            let spec = LinearModelSpec::isotropic(DVector::from_vec(vec![1.0, -0.3, 2.0]), 0.7).unwrap();
            let data = generate_linear_data(&spec, n, seed).unwrap();
            let s = dataset_to_csv_string(&data).unwrap();
            let back = read_dataset_csv(s.as_bytes(), false).unwrap();
            prop_assert_eq!(back, data);
        }
    }
}
