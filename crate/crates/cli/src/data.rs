//! External observation files: a header row of series names, then one row
//! per observation.

use std::path::Path;

use corrfilter_core::models;
use corrfilter_core::SymmetricMatrix;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct DataMatrix {
    pub labels: Vec<String>,
    /// `p x n`, rows are series.
    pub series: DMatrix<f64>,
}

impl DataMatrix {
    pub fn p(&self) -> usize {
        self.series.nrows()
    }

    pub fn n(&self) -> usize {
        self.series.ncols()
    }

    /// Columns of the file rescaled to zero mean and unit variance (divisor
    /// `n`).
    pub fn standardized(&self) -> DMatrix<f64> {
        let mut z = self.series.clone();
        models::standardize_rows(&mut z);
        z
    }

    /// `Z Z' / n` on the standardized data.
    pub fn correlation(&self) -> SymmetricMatrix {
        models::second_moment(&self.standardized())
    }
}

pub fn read_data(path: &Path) -> CliResult<DataMatrix> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    parse_data(file)
}

pub fn parse_data(input: impl std::io::Read) -> CliResult<DataMatrix> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let labels: Vec<String> = rd
        .headers()
        .map_err(|e| CliError::Usage(format!("cannot read header: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(CliError::Usage("data file has no columns".into()));
    }
    let p = labels.len();
    let mut values: Vec<f64> = Vec::new();
    let mut n = 0;
    for (r, record) in rd.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = r + 2;
        let record = record.map_err(|e| CliError::Usage(format!("row {row}: {e}")))?;
        if record.len() != p {
            return Err(CliError::Usage(format!("row {row}: expected {p} fields, found {}", record.len())));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::Usage(format!(
                    "row {row}, column {} ('{}'): '{field}' is not a finite number",
                    c + 1,
                    labels[c]
                ))
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n < 2 {
        return Err(CliError::Usage(format!("need at least 2 observations, found {n}")));
    }
    let series = DMatrix::from_row_slice(n, p, &values).transpose();
    for (i, row) in series.row_iter().enumerate() {
        let first = row[0];
        if row.iter().all(|&x| x == first) {
            return Err(CliError::Usage(format!("column {} ('{}') is constant", i + 1, labels[i])));
        }
    }
    Ok(DataMatrix { labels, series })
}

/// Square matrix with the series names as row and column labels.
pub fn write_labeled_matrix(m: &SymmetricMatrix, labels: &[String]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(CliError::runtime)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend((0..labels.len()).map(|j| format!("{:.16e}", m.get(i, j))));
        w.write_record(&row).map_err(CliError::runtime)?;
    }
    w.into_inner().map_err(CliError::runtime)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_columns_as_series() {
        let d = parse_data("a,b\n1,2\n3,5\n4,4\n".as_bytes()).unwrap();
        assert_eq!((d.p(), d.n()), (2, 3));
        assert_eq!(d.series[(1, 1)], 5.0);
        let e = d.correlation();
        assert!((e.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_bad_cells_with_coordinates() {
        let err = parse_data("a,b\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("row 3, column 2 ('b')"), "{err}");
        assert!(parse_data("a,b\n1,2\n".as_bytes()).is_err());
        assert!(parse_data("a,b\n1,2\n1,3\n".as_bytes()).unwrap_err().to_string().contains("constant"));
    }
}
