//! Observed samples as a dense row-major point matrix, with CSV import/export.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

/// `n` points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    dim: usize,
    points: Vec<f64>,
}

impl DataSet {
    /// Builds a data set from a flat row-major buffer.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "expected a non-empty multiple of {dim} coordinates, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in row {}",
                bad / dim
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty data set".into()))?;
        let dim = first.as_ref().len();
        let mut points = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            check_dim(dim, row.as_ref().len())?;
            points.extend_from_slice(row.as_ref());
        }
        Self::new(dim, points)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut m = vec![0.0; self.dim];
        for row in self.rows() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Unbiased sample covariance (denominator `n - 1`).
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "covariance needs at least two points".into(),
            ));
        }
        let d = self.dim;
        let mean = self.mean();
        let mut cov = DMatrix::zeros(d, d);
        for row in self.rows() {
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in 0..=a {
                    cov[(a, b)] += da * (row[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov[(a, b)] / (n - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        Ok(cov)
    }

    /// Per-coordinate sample standard deviations.
    pub fn std_devs(&self) -> Result<Vec<f64>> {
        let cov = self.covariance()?;
        Ok((0..self.dim).map(|k| cov[(k, k)].sqrt()).collect())
    }

    /// Applies `x -> S x + t` to every point.
    pub fn affine(&self, s: &DMatrix<f64>, t: &[f64]) -> Result<Self> {
        check_dim(self.dim, s.ncols())?;
        check_dim(self.dim, t.len())?;
        let mut out = Vec::with_capacity(self.points.len());
        for row in self.rows() {
            for a in 0..s.nrows() {
                let mut v = t[a];
                for (b, x) in row.iter().enumerate() {
                    v += s[(a, b)] * x;
                }
                out.push(v);
            }
        }
        Self::new(s.nrows(), out)
    }

    /// Per-coordinate bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for row in self.rows() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(row[k]);
                hi[k] = hi[k].max(row[k]);
            }
        }
        (lo, hi)
    }

    /// Reads one point per row. A leading header line is skipped when its
    /// first field does not parse as a number.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => rows.push(v),
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(Error::InvalidArgument(format!(
                        "line {}: {e}",
                        line + 1
                    )))
                }
            }
        }
        Self::from_rows(&rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record((1..=self.dim).map(|k| format!("x{k}")))?;
        for row in self.rows() {
            wtr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }
}
