//! Observation matrices. Columns are observations, rows are dimensions.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `D × K` matrix whose columns are component means (GMM) or topics (LDA).
pub type ParameterMatrix = DMatrix<f64>;

/// A `D × N` observation matrix with optional generating component labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>) -> Self {
        Dataset { x, labels: None }
    }

    pub fn with_labels(x: DMatrix<f64>, labels: Vec<usize>) -> Self {
        Dataset {
            x,
            labels: Some(labels),
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != d) {
            return Err(Error::Shape("observations have differing dimensions".into()));
        }
        Ok(Dataset::new(DMatrix::from_fn(d, columns.len(), |i, j| columns[j][i])))
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.x.nrows();
        &self.x.as_slice()[j * d..(j + 1) * d]
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "cannot concatenate datasets of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut data = self.x.as_slice().to_vec();
        data.extend_from_slice(other.x.as_slice());
        Ok(Dataset::new(DMatrix::from_vec(
            self.dim(),
            self.len() + other.len(),
            data,
        )))
    }

    /// Dataset restricted to the given columns, in order.
    pub fn select(&self, columns: &[usize]) -> Dataset {
        let d = self.dim();
        let x = DMatrix::from_fn(d, columns.len(), |i, j| self.x[(i, columns[j])]);
        let labels = self
            .labels
            .as_ref()
            .map(|l| columns.iter().map(|&c| l[c]).collect());
        Dataset { x, labels }
    }

    /// Writes one observation per CSV row, no header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for j in 0..self.len() {
            w.write_record(self.column(j).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut columns = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let col = record
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: line + 1,
                        message: format!("{f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            columns.push(col);
        }
        Dataset::from_columns(&columns)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("dataset contains non-finite entries".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::from_columns(&[vec![1.0, 2.5], vec![-3.0, 1e-7]]).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn concat_checks_dimension() {
        let a = Dataset::new(DMatrix::zeros(2, 3));
        let b = Dataset::new(DMatrix::zeros(3, 1));
        assert!(matches!(a.concat(&b), Err(Error::Shape(_))));
        assert_eq!(a.concat(&a).unwrap().len(), 6);
    }
}
